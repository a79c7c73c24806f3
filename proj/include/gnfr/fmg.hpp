#ifndef GNFR_FMG_HPP
#define GNFR_FMG_HPP

#include "gnfr/layers.hpp"
#include "gnfr/scene_io.hpp"

#include <memory>
#include <string>
#include <vector>

namespace gnfr {

struct SegConfig {
    int base_channels = 16;
    std::vector<int> bins{1, 2, 4};  // pyramid pooling grid sizes

    void validate() const;
};

struct SegTrainConfig {
    int iters = 2000;
    double lr = 1e-3;
    uint64_t seed = 1;
    double w_pos = 5.0;  // flare class weight
    double w_neg = 1.0;
    double holdout_frac = 0.1;
    int log_every = 200;
};

struct SegMetrics {
    double miou = 0.0, macc = 0.0;
    double iou_flare = 0.0, iou_clean = 0.0;
    double acc_flare = 0.0, acc_clean = 0.0;  // per-class recall
};

struct SegSample {
    Image input;                  // flare-corrupted RGB
    std::vector<uint8_t> target;  // h*w binary flare-occupancy bits
};

struct SegCorpus {
    std::vector<SegSample> samples;
};

// Reads `dir/flare/NNNNN.png` + `dir/mask/NNNNN.png` pairs (contiguous from 0).
SegCorpus load_seg_corpus(const std::string& dir);

// Pyramid-pooling encoder/decoder over a stride-2 stem; logits at half
// resolution, bilinearly upsampled to the input size.
class SegNet {
  public:
    SegNet(const SegConfig& cfg, uint64_t init_seed);

    const SegConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }

    // [h*w, 1] flare logits at input resolution (differentiable).
    nn::Var forward_logits(const Image& img) const;

    // Value-only sigmoid(logit) > 0.5 decision per pixel.
    std::vector<uint8_t> infer_bits(const Image& img) const;
    OccupancyMask infer_mask(const Image& img) const;

  private:
    struct Layers;
    SegConfig cfg_;
    nn::ParamStore store_;
    std::shared_ptr<Layers> layers_;
};

// Deterministic ~holdout_frac split by hashed sample index; returns held-out
// metrics after training. Samples are drawn uniformly from the training split.
SegMetrics train_fmg(SegNet& net, const SegCorpus& corpus, const SegTrainConfig& cfg);

SegMetrics evaluate_seg(const SegNet& net, const SegCorpus& corpus,
                        const std::vector<int>& indices);

// Pixel-count metrics over prediction/target bit planes; a class absent from
// both prediction and target scores 1.0.
SegMetrics seg_metrics(const std::vector<std::vector<uint8_t>>& pred,
                       const std::vector<std::vector<uint8_t>>& target);

// Indices hashed into the held-out split for the given fraction.
std::vector<int> holdout_indices(size_t corpus_size, double frac);

}  // namespace gnfr

#endif
