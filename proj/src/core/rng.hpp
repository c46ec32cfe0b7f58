#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace mlmcmc {

// Stream tags for the root-seeded streams. Each (root seed, replicate, tag)
// triple gets its own engine so that scheduling in one stream never perturbs
// another.
enum class StreamTag : std::uint32_t {
  Level = 0x100,
  Truth = 0x200,
  Noise = 0x300,
  Test = 0x400,
};

class Rng {
 public:
  Rng() : Rng(0, 0, StreamTag::Test, 0) {}

  Rng(std::uint64_t root_seed, std::uint64_t replicate, StreamTag tag, std::uint32_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                      static_cast<std::uint32_t>(tag), index};
    engine_.seed(seq);
  }

  explicit Rng(std::uint64_t seed) : Rng(seed, 0, StreamTag::Test, 0) {}

  double normal() { return normal_(engine_); }

  // Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }

  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << normal_;
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    Rng rng;
    std::istringstream is(text);
    is >> rng.engine_ >> rng.normal_;
    return rng;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_ && a.normal_ == b.normal_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mlmcmc
