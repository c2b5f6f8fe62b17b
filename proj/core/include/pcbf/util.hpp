#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pcbf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Deterministic uniform draws. std::uniform_real_distribution is
/// implementation-defined, so the mapping from engine bits to doubles is done
/// by hand to keep logs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Componentwise uniform in [lo, hi].
  Vec uniform_box(const Vec& lo, const Vec& hi) {
    Vec out(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) out[i] = uniform(lo[i], hi[i]);
    return out;
  }

  /// Standard normal via Box-Muller (deterministic, no std::normal_distribution).
  double gauss() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec gauss_vec(Eigen::Index n) {
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = gauss();
    return out;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a, used for config/model fingerprints written into design bundles.
inline std::uint64_t fnv1a(std::string_view data,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string format_hash(std::uint64_t h);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Writes `content` to `path` atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// Worker cap for embarrassingly parallel scenario sweeps: PCBF_THREADS if
/// set, hardware concurrency otherwise.
int worker_count();

}  // namespace pcbf
