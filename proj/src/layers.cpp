#include "gnfr/layers.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace gnfr::nn {

void Adam::step(ParamStore& store, double lr) {
    if (m.empty()) {
        m.resize(store.params.size());
        v.resize(store.params.size());
        for (size_t i = 0; i < store.params.size(); ++i) {
            m[i].assign(store.params[i].second->val.numel(), 0.0);
            v[i].assign(store.params[i].second->val.numel(), 0.0);
        }
    }
    ++t;
    double bc1 = 1.0 - std::pow(beta1, t);
    double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < store.params.size(); ++i) {
        auto& p = store.params[i].second;
        if (p->grad.empty()) continue;
        for (size_t j = 0; j < p->val.numel(); ++j) {
            double g = p->grad[j];
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
            p->val.v[j] -= lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
        }
    }
}

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double s = std::sqrt(2.0 / fan_in);
    for (auto& x : t.v) x = s * rng.normal();
    return t;
}

Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Conv2d::Conv2d(ParamStore& s, const std::string& name, int cin_, int cout_, int k_, int stride_,
               int pad_, Rng& rng)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
    w = s.add(name + ".w", he_init({k * k * cin, cout}, k * k * cin, rng));
    b = s.add(name + ".b", zeros({cout}));
}

namespace {

// cache of im2col index maps, keyed by geometry
std::shared_ptr<std::vector<int64_t>> im2col_indices(int h, int w, int cin, int k, int stride,
                                                     int pad, int& oh, int& ow) {
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (w + 2 * pad - k) / stride + 1;
    static std::map<std::array<int, 6>, std::shared_ptr<std::vector<int64_t>>> cache;
    std::array<int, 6> key{h, w, cin, k, stride, pad};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(oh) * ow * k * k * cin);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int iy = oy * stride + ky - pad;
                    int ix = ox * stride + kx - pad;
                    bool in = iy >= 0 && iy < h && ix >= 0 && ix < w;
                    for (int c = 0; c < cin; ++c)
                        idx->push_back(in ? (static_cast<int64_t>(iy) * w + ix) * cin + c : -1);
                }
    cache[key] = idx;
    return idx;
}

}  // namespace

FMap Conv2d::forward(const FMap& x) const {
    int oh, ow;
    auto idx = im2col_indices(x.h, x.w, cin, k, stride, pad, oh, ow);
    Var cols = permute_gather(x.t, idx, {oh * ow, k * k * cin});
    Var out = linear(cols, w, b);
    return {out, oh, ow, cout};
}

Dense::Dense(ParamStore& s, const std::string& name, int din_, int dout_, Rng& rng)
    : din(din_), dout(dout_) {
    w = s.add(name + ".w", he_init({din, dout}, din, rng));
    b = s.add(name + ".b", zeros({dout}));
}

LayerNormM::LayerNormM(ParamStore& s, const std::string& name, int d) {
    gamma = s.add(name + ".g", Tensor({d}, dvec(d, 1.0)));
    beta = s.add(name + ".b", zeros({d}));
}

ResBlock::ResBlock(ParamStore& s, const std::string& name, int c, Rng& rng) {
    c1 = Conv2d(s, name + ".c1", c, c, 3, 1, 1, rng);
    c2 = Conv2d(s, name + ".c2", c, c, 3, 1, 1, rng);
}

FMap ResBlock::forward(const FMap& x) const {
    FMap y = c1.forward(x);
    y.t = relu(y.t);
    y = c2.forward(y);
    return {relu(add(y.t, x.t)), x.h, x.w, x.c};
}

std::shared_ptr<RowTaps> bilinear_resize_taps(int in_h, int in_w, int out_h, int out_w) {
    auto taps = std::make_shared<RowTaps>();
    taps->offsets.push_back(0);
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * in_h / out_h - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, in_h - 1);
        double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * in_w / out_w - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, in_w - 1);
            double wx = fx - x0;
            taps->cells.push_back(y0 * in_w + x0);
            taps->wts.push_back((1 - wy) * (1 - wx));
            taps->cells.push_back(y0 * in_w + x1);
            taps->wts.push_back((1 - wy) * wx);
            taps->cells.push_back(y1 * in_w + x0);
            taps->wts.push_back(wy * (1 - wx));
            taps->cells.push_back(y1 * in_w + x1);
            taps->wts.push_back(wy * wx);
            taps->offsets.push_back(static_cast<int>(taps->cells.size()));
        }
    }
    return taps;
}

std::shared_ptr<RowTaps> nearest_resize_taps(int in_h, int in_w, int out_h, int out_w) {
    auto taps = std::make_shared<RowTaps>();
    taps->offsets.push_back(0);
    for (int oy = 0; oy < out_h; ++oy) {
        int iy = std::min(oy * in_h / out_h, in_h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            int ix = std::min(ox * in_w / out_w, in_w - 1);
            taps->cells.push_back(iy * in_w + ix);
            taps->wts.push_back(1.0);
            taps->offsets.push_back(static_cast<int>(taps->cells.size()));
        }
    }
    return taps;
}

std::shared_ptr<RowTaps> adaptive_avg_taps(int in_h, int in_w, int bins) {
    auto taps = std::make_shared<RowTaps>();
    taps->offsets.push_back(0);
    for (int by = 0; by < bins; ++by) {
        int y0 = by * in_h / bins, y1 = (by + 1) * in_h / bins;
        for (int bx = 0; bx < bins; ++bx) {
            int x0 = bx * in_w / bins, x1 = (bx + 1) * in_w / bins;
            double w = 1.0 / ((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    taps->cells.push_back(y * in_w + x);
                    taps->wts.push_back(w);
                }
            taps->offsets.push_back(static_cast<int>(taps->cells.size()));
        }
    }
    return taps;
}

FMap upsample_bilinear(const FMap& x, int out_h, int out_w) {
    auto taps = bilinear_resize_taps(x.h, x.w, out_h, out_w);
    return {gather_rows(x.t, taps, x.c), out_h, out_w, x.c};
}

FMap concat_channels(const std::vector<FMap>& xs) {
    int h = xs[0].h, w = xs[0].w;
    int ctot = 0;
    for (auto& x : xs) ctot += x.c;
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(h) * w * ctot);
    // permute_gather reads from a single tensor, so first pack inputs into one
    // flat tensor (zero-padded gathers summed), then interleave per pixel.
    size_t total = 0;
    for (auto& x : xs) total += x.t->val.numel();
    // Build combined constant-or-graph tensor by summing padded gathers.
    Var combined;
    size_t off = 0;
    for (auto& x : xs) {
        auto m = std::make_shared<std::vector<int64_t>>(total, -1);
        for (size_t i = 0; i < x.t->val.numel(); ++i) (*m)[off + i] = static_cast<int64_t>(i);
        Var padded = permute_gather(x.t, m, {static_cast<int>(total)});
        combined = combined ? add(combined, padded) : padded;
        off += x.t->val.numel();
    }
    // now interleave channels per pixel
    off = 0;
    std::vector<size_t> starts;
    for (auto& x : xs) {
        starts.push_back(off);
        off += x.t->val.numel();
    }
    for (int p = 0; p < h * w; ++p)
        for (size_t xi = 0; xi < xs.size(); ++xi)
            for (int c = 0; c < xs[xi].c; ++c)
                idx->push_back(static_cast<int64_t>(starts[xi] + static_cast<size_t>(p) * xs[xi].c + c));
    return {permute_gather(combined, idx, {h * w, ctot}), h, w, ctot};
}

// --- checkpoint ------------------------------------------------------------

static constexpr char kMagic[8] = {'G', 'N', 'F', 'R', 'C', 'K', 'P', '1'};

void save_checkpoint(const std::string& path, const std::string& manifest_json,
                     const ParamStore& store) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(kMagic, 8);
    uint64_t mlen = manifest_json.size();
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(manifest_json.data(), static_cast<std::streamsize>(mlen));
    uint64_t np = store.params.size();
    f.write(reinterpret_cast<const char*>(&np), 8);
    for (auto& [name, v] : store.params) {
        uint32_t nlen = static_cast<uint32_t>(name.size());
        f.write(reinterpret_cast<const char*>(&nlen), 4);
        f.write(name.data(), nlen);
        uint64_t cnt = v->val.numel();
        f.write(reinterpret_cast<const char*>(&cnt), 8);
        f.write(reinterpret_cast<const char*>(v->val.v.data()),
                static_cast<std::streamsize>(cnt * 8));
    }
    if (!f) throw IoError("write failed: " + path);
}

std::string load_checkpoint(const std::string& path, ParamStore& store) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw BadCheckpoint("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw BadCheckpoint("bad magic: " + path);
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    std::string manifest(mlen, '\0');
    f.read(manifest.data(), static_cast<std::streamsize>(mlen));
    uint64_t np = 0;
    f.read(reinterpret_cast<char*>(&np), 8);
    if (!f) throw BadCheckpoint("truncated: " + path);
    if (np != store.params.size())
        throw BadCheckpoint("parameter count mismatch in " + path);
    for (auto& [name, v] : store.params) {
        uint32_t nlen = 0;
        f.read(reinterpret_cast<char*>(&nlen), 4);
        std::string n(nlen, '\0');
        f.read(n.data(), nlen);
        uint64_t cnt = 0;
        f.read(reinterpret_cast<char*>(&cnt), 8);
        if (!f || n != name || cnt != v->val.numel())
            throw BadCheckpoint("parameter layout mismatch at '" + n + "' in " + path);
        f.read(reinterpret_cast<char*>(v->val.v.data()), static_cast<std::streamsize>(cnt * 8));
    }
    if (!f) throw BadCheckpoint("truncated parameters: " + path);
    return manifest;
}

std::string read_checkpoint_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw BadCheckpoint("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw BadCheckpoint("bad magic: " + path);
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    std::string manifest(mlen, '\0');
    f.read(manifest.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw BadCheckpoint("truncated: " + path);
    return manifest;
}

}  // namespace gnfr::nn
