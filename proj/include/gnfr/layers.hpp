#ifndef GNFR_LAYERS_HPP
#define GNFR_LAYERS_HPP

#include "gnfr/autodiff.hpp"
#include "gnfr/common.hpp"

#include <map>
#include <string>

namespace gnfr::nn {

// Named parameter registry; ordering is the checkpoint serialization order.
struct ParamStore {
    std::vector<std::pair<std::string, Var>> params;

    Var add(const std::string& name, Tensor init) {
        auto v = make_param(std::move(init));
        params.emplace_back(name, v);
        return v;
    }
    Var find(const std::string& name) const {
        for (auto& [n, v] : params)
            if (n == name) return v;
        return nullptr;
    }
    size_t total_size() const {
        size_t n = 0;
        for (auto& [_, v] : params) n += v->val.numel();
        return n;
    }
    void zero_grad() {
        for (auto& [_, v] : params)
            if (!v->grad.empty()) std::fill(v->grad.begin(), v->grad.end(), 0.0);
    }
};

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int t = 0;
    std::vector<std::vector<double>> m, v;

    void step(ParamStore& store, double lr);
};

// Feature map carried as a [h*w, c] tensor plus its spatial dims.
struct FMap {
    Var t;
    int h = 0, w = 0, c = 0;
};

// Weight init helpers (He for relu convs/linears).
Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng);
Tensor zeros(std::vector<int> shape);

struct Conv2d {
    Var w, b;
    int cin, cout, k, stride, pad;

    Conv2d() = default;
    Conv2d(ParamStore& s, const std::string& name, int cin, int cout, int k, int stride, int pad,
           Rng& rng);
    FMap forward(const FMap& x) const;
};

struct Dense {
    Var w, b;
    int din = 0, dout = 0;
    Dense() = default;
    Dense(ParamStore& s, const std::string& name, int din, int dout, Rng& rng);
    Var forward(const Var& x) const { return linear(x, w, b); }
};

struct LayerNormM {
    Var gamma, beta;
    LayerNormM() = default;
    LayerNormM(ParamStore& s, const std::string& name, int d);
    Var forward(const Var& x) const { return layernorm_rows(x, gamma, beta); }
};

// conv-relu-conv + skip, relu after add
struct ResBlock {
    Conv2d c1, c2;
    ResBlock() = default;
    ResBlock(ParamStore& s, const std::string& name, int c, Rng& rng);
    FMap forward(const FMap& x) const;
};

// fixed-weight resampling taps over [h*w, c] maps
std::shared_ptr<RowTaps> bilinear_resize_taps(int in_h, int in_w, int out_h, int out_w);
std::shared_ptr<RowTaps> nearest_resize_taps(int in_h, int in_w, int out_h, int out_w);
std::shared_ptr<RowTaps> adaptive_avg_taps(int in_h, int in_w, int bins);

FMap upsample_bilinear(const FMap& x, int out_h, int out_w);

// concat along channels; all inputs share h,w
FMap concat_channels(const std::vector<FMap>& xs);

// --- checkpoint serialization ---------------------------------------------
// Single binary file: magic, version, JSON manifest, then raw doubles of all
// parameters in registration order.
void save_checkpoint(const std::string& path, const std::string& manifest_json,
                     const ParamStore& store);
// Returns the manifest; parameters are loaded into `store` (shapes must match).
std::string load_checkpoint(const std::string& path, ParamStore& store);
// Reads only the manifest.
std::string read_checkpoint_manifest(const std::string& path);

}  // namespace gnfr::nn

#endif
