#ifndef GNFR_RENDERER_HPP
#define GNFR_RENDERER_HPP

#include "gnfr/geometry.hpp"
#include "gnfr/layers.hpp"
#include "gnfr/sampling.hpp"

#include <memory>

namespace gnfr {

enum class AttnMaskMode { multiply_renormalize, multiply_raw };

struct RendererConfig {
    int feature_dim = 32;  // d, divisible by n_heads
    int n_blocks = 2;      // alternating (view, ray) pairs
    int n_heads = 4;
    int m_samples = 32;    // depth samples per ray
    int pos_enc_freqs = 6;
    int mlp_hidden = 64;
    AttnMaskMode attn_mask_mode = AttnMaskMode::multiply_renormalize;
    // Point Sampler toggle: when false, flare bits are ignored in attention
    // (out-of-view samples stay masked; that is geometry, not flare).
    bool use_point_sampler = true;

    void validate() const;
};

// Per-ray, per-depth-point, per-source-view epipolar samples.
struct EpipolarSamples {
    int b = 0, m = 0, n_views = 0, d = 0;
    std::vector<double> features;    // B*M*N*d, zero where projection invalid
    std::vector<uint8_t> point_mask;  // B*M*N, 1 = flare-affected OR out-of-view
    std::vector<uint8_t> invalid;     // B*M*N, 1 = projection invalid only
    std::vector<double> view_dirs;    // B*M*N*4 relative direction encoding

    size_t idx(int bi, int mi, int vi) const {
        return (static_cast<size_t>(bi) * m + mi) * n_views + vi;
    }
};

// Attention-weight helper exposed for tests: softmax over per-view logits,
// multiplied by (1 - mask), renormalized or raw, with the all-masked
// fallback (uniform over valid projections, else uniform over all).
std::vector<double> masked_attention_weights(const std::vector<double>& logits,
                                             const std::vector<uint8_t>& mask,
                                             const std::vector<uint8_t>& invalid,
                                             AttnMaskMode mode);

class GnfrRenderer {
  public:
    GnfrRenderer(const RendererConfig& cfg, uint64_t init_seed);

    const RendererConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }

    // One 1/4-resolution FeatureGrid per view (value-only forward).
    std::vector<FeatureGrid> encode_views(const std::vector<const CameraView*>& views) const;

    // Projects every (ray, depth, view) sample and interpolates grids.
    EpipolarSamples gather_epipolar(const RayBundle& rays,
                                    const std::vector<const CameraView*>& views,
                                    const std::vector<FeatureGrid>& grids) const;

    // First view-transformer block applied to externally supplied samples
    // (value-only; exercises Point Sampler masking in isolation). -> B*M*d
    std::vector<double> masked_view_attention(const EpipolarSamples& samples) const;

    // Differentiable full pipeline: encode -> gather -> alternating
    // view/ray transformer blocks -> decode. Output [B, 3] in (0,1).
    nn::Var render_rays_var(const RayBundle& rays,
                            const std::vector<const CameraView*>& views);

    // Value-only render.
    std::vector<Eigen::Vector3d> render_rays(const RayBundle& rays,
                                             const std::vector<const CameraView*>& views) const;

    // Renders a full target view in chunks using the given source selection.
    Image render_image(const SceneDataset& scene, const CameraView& target,
                       const ViewSelection& sel, int chunk = 1024) const;

  private:
    struct Blocks;
    nn::FMap encode_one(const Image& img) const;
    nn::Var forward(const RayBundle& rays, const std::vector<const CameraView*>& views) const;

    RendererConfig cfg_;
    nn::ParamStore store_;
    std::shared_ptr<Blocks> blocks_;
};

}  // namespace gnfr

#endif
