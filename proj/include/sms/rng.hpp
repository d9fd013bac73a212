#ifndef SMS_RNG_HPP
#define SMS_RNG_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sms/types.hpp"

namespace sms {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from a master
// seed without overlapping mt19937_64 states.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(mix_seed(seed, stream)); }

inline double draw_normal(Rng& rng) {
    static thread_local std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline Vec draw_normal_vec(Rng& rng, Eigen::Index d) {
    Vec z(d);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = dist(rng);
    return z;
}

// Source of the d-dimensional standard Gaussian slots consumed by the
// integrator maps. Abstracted so tests can suppress noise and coupled-chain
// machinery can record, aggregate, and replay the draws.
class NoiseSource {
  public:
    virtual ~NoiseSource() = default;
    virtual Vec draw(Eigen::Index d) = 0;
};

class GaussianNoise final : public NoiseSource {
  public:
    explicit GaussianNoise(std::uint64_t seed) : rng_(seed) {}
    explicit GaussianNoise(Rng rng) : rng_(rng) {}
    Vec draw(Eigen::Index d) override { return draw_normal_vec(rng_, d); }
    Rng& rng() { return rng_; }

  private:
    Rng rng_;
};

// Test hook: all xi = 0, exposing the deterministic part of each map.
class ZeroNoise final : public NoiseSource {
  public:
    Vec draw(Eigen::Index d) override { return Vec::Zero(d); }
};

// Draws from an inner source while appending every slot to a log.
class RecordingNoise final : public NoiseSource {
  public:
    RecordingNoise(NoiseSource& inner, std::vector<Vec>& log) : inner_(inner), log_(log) {}
    Vec draw(Eigen::Index d) override {
        Vec z = inner_.draw(d);
        log_.push_back(z);
        return z;
    }

  private:
    NoiseSource& inner_;
    std::vector<Vec>& log_;
};

// Replays pre-computed slots in order; throws if over-consumed.
class ReplayNoise final : public NoiseSource {
  public:
    explicit ReplayNoise(std::span<const Vec> slots) : slots_(slots) {}
    Vec draw(Eigen::Index d) override {
        require(cursor_ < slots_.size(), "ReplayNoise exhausted");
        const Vec& z = slots_[cursor_++];
        require(z.size() == d, "ReplayNoise dimension mismatch");
        return z;
    }
    std::size_t consumed() const { return cursor_; }

  private:
    std::span<const Vec> slots_;
    std::size_t cursor_ = 0;
};

}  // namespace sms

#endif  // SMS_RNG_HPP
