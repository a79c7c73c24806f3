#ifndef GNFR_COMMON_HPP
#define GNFR_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnfr {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct MissingFile : std::runtime_error {
    explicit MissingFile(const std::string& m) : std::runtime_error("MissingFile: " + m) {}
};
struct BadPose : std::runtime_error {
    explicit BadPose(const std::string& m) : std::runtime_error("BadPose: " + m) {}
};
struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& m) : std::runtime_error("ShapeMismatch: " + m) {}
};
struct BadBounds : std::runtime_error {
    explicit BadBounds(const std::string& m) : std::runtime_error("BadBounds: " + m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("IoError: " + m) {}
};
struct DegenerateTransform : std::runtime_error {
    explicit DegenerateTransform(const std::string& m)
        : std::runtime_error("DegenerateTransform: " + m) {}
};
struct BadSpec : std::runtime_error {
    explicit BadSpec(const std::string& m) : std::runtime_error("BadSpec: " + m) {}
};
struct EmptyCorpus : std::runtime_error {
    explicit EmptyCorpus(const std::string& m) : std::runtime_error("EmptyCorpus: " + m) {}
};
struct DivergedLoss : std::runtime_error {
    explicit DivergedLoss(const std::string& m) : std::runtime_error("DivergedLoss: " + m) {}
};
struct BadCheckpoint : std::runtime_error {
    explicit BadCheckpoint(const std::string& m) : std::runtime_error("BadCheckpoint: " + m) {}
};
struct NoMask : std::runtime_error {
    explicit NoMask(const std::string& m) : std::runtime_error("NoMask: " + m) {}
};
struct TooFewViews : std::runtime_error {
    explicit TooFewViews(const std::string& m) : std::runtime_error("TooFewViews: " + m) {}
};
struct NoTrainableTargets : std::runtime_error {
    explicit NoTrainableTargets(const std::string& m)
        : std::runtime_error("NoTrainableTargets: " + m) {}
};
struct OutOfBounds : std::runtime_error {
    explicit OutOfBounds(const std::string& m) : std::runtime_error("OutOfBounds: " + m) {}
};
struct EmptyRegion : std::runtime_error {
    explicit EmptyRegion(const std::string& m) : std::runtime_error("EmptyRegion: " + m) {}
};
struct MisalignedScenes : std::runtime_error {
    explicit MisalignedScenes(const std::string& m)
        : std::runtime_error("MisalignedScenes: " + m) {}
};

// ---------------------------------------------------------------------------
// Image: H x W x C, row-major, channels interleaved, doubles (linear RGB).
// ---------------------------------------------------------------------------

struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    double& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    size_t numel() const { return data.size(); }
};

// ---------------------------------------------------------------------------
// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// that streams do not depend on the standard library implementation.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive on both ends
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform() * static_cast<double>(hi - lo + 1));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p = 0.5) { return uniform() < p; }

  private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent child seed, e.g. per corpus index or per scene.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL + index * 0xbf58476d1ce4e5b9ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace gnfr

#endif
