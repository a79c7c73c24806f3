#include "gnfr/eval.hpp"
#include "gnfr/flare_synth.hpp"
#include "gnfr/fmg.hpp"
#include "gnfr/renderer.hpp"
#include "gnfr/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t seed_override(uint64_t cli_seed) {
    if (const char* env = std::getenv("GNFR_SEED")) return std::strtoull(env, nullptr, 10);
    return cli_seed;
}

json renderer_manifest(const gnfr::RendererConfig& cfg, uint64_t seed) {
    json m;
    m["kind"] = "renderer";
    m["feature_dim"] = cfg.feature_dim;
    m["n_blocks"] = cfg.n_blocks;
    m["n_heads"] = cfg.n_heads;
    m["m_samples"] = cfg.m_samples;
    m["pos_enc_freqs"] = cfg.pos_enc_freqs;
    m["mlp_hidden"] = cfg.mlp_hidden;
    m["renormalize"] = cfg.attn_mask_mode == gnfr::AttnMaskMode::multiply_renormalize;
    m["use_point_sampler"] = cfg.use_point_sampler;
    m["init_seed"] = seed;
    return m;
}

gnfr::GnfrRenderer renderer_from_checkpoint(const std::string& path) {
    json m = json::parse(gnfr::nn::read_checkpoint_manifest(path));
    if (m.value("kind", "") != "renderer")
        throw gnfr::BadCheckpoint(path + " is not a renderer checkpoint");
    gnfr::RendererConfig cfg;
    cfg.feature_dim = m["feature_dim"];
    cfg.n_blocks = m["n_blocks"];
    cfg.n_heads = m["n_heads"];
    cfg.m_samples = m["m_samples"];
    cfg.pos_enc_freqs = m["pos_enc_freqs"];
    cfg.mlp_hidden = m["mlp_hidden"];
    cfg.attn_mask_mode = m.value("renormalize", true) ? gnfr::AttnMaskMode::multiply_renormalize
                                                      : gnfr::AttnMaskMode::multiply_raw;
    cfg.use_point_sampler = m.value("use_point_sampler", true);
    gnfr::GnfrRenderer net(cfg, m.value("init_seed", uint64_t(1)));
    gnfr::nn::load_checkpoint(path, net.params());
    return net;
}

gnfr::SegNet segnet_from_checkpoint(const std::string& path) {
    json m = json::parse(gnfr::nn::read_checkpoint_manifest(path));
    if (m.value("kind", "") != "fmg")
        throw gnfr::BadCheckpoint(path + " is not an fmg checkpoint");
    gnfr::SegConfig cfg;
    cfg.base_channels = m["base_channels"];
    cfg.bins = m["bins"].get<std::vector<int>>();
    gnfr::SegNet net(cfg, m.value("init_seed", uint64_t(1)));
    gnfr::nn::load_checkpoint(path, net.params());
    return net;
}

// mask-mode: "annotated" keeps loaded masks, "none" installs empty masks,
// "fmg:<ckpt>" replaces masks with network inferences.
void apply_mask_mode(gnfr::SceneDataset& scene, const std::string& mode) {
    if (mode == "annotated") {
        for (size_t i = 0; i < scene.views.size(); ++i)
            if (!scene.views[i].mask)
                throw gnfr::NoMask(scene.scene_id + ": view " + std::to_string(i) +
                                   " lacks an annotated mask");
        return;
    }
    if (mode == "none") {
        for (auto& v : scene.views)
            v.mask = gnfr::OccupancyMask::from_bits(
                v.image.h, v.image.w,
                std::vector<uint8_t>(static_cast<size_t>(v.image.h) * v.image.w, 0));
        return;
    }
    if (mode.rfind("fmg:", 0) == 0) {
        gnfr::SegNet net = segnet_from_checkpoint(mode.substr(4));
        for (auto& v : scene.views) v.mask = net.infer_mask(v.image);
        return;
    }
    throw CLI::ValidationError("--mask-mode must be annotated, none, or fmg:<checkpoint>");
}

std::vector<int> parse_index_list(const std::string& csv) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(std::stoi(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

// Renders the held-out views using only the remaining views as sources.
void render_heldout(const gnfr::GnfrRenderer& net, const gnfr::SceneDataset& scene,
                    const std::vector<int>& heldout, int n, double k, bool ignore_occupancy,
                    const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (int t : heldout) {
        if (t < 0 || t >= static_cast<int>(scene.views.size()))
            throw gnfr::BadSpec("held-out index out of range: " + std::to_string(t));
        gnfr::ViewSelection sel =
            gnfr::select_sources_excluding(scene, t, n, k, heldout, ignore_occupancy);
        gnfr::Image img = net.render_image(scene, scene.views[t], sel);
        gnfr::save_rendered(scene.views[t].id, img, out_dir);
    }
}

// Evaluation references: clean images when a clean scene is given, with the
// flare-occupancy masks carried over from the (possibly flared) input scene.
gnfr::SceneDataset eval_reference(const gnfr::SceneDataset& scene, const std::string& clean_dir) {
    if (clean_dir.empty()) return scene;
    gnfr::SceneDataset ref = gnfr::load_scene(clean_dir);
    if (ref.views.size() != scene.views.size())
        throw gnfr::ShapeMismatch("clean scene view count differs from input scene");
    for (size_t i = 0; i < ref.views.size(); ++i) {
        if (ref.views[i].id != scene.views[i].id)
            throw gnfr::ShapeMismatch("clean/input scenes disagree on view ids");
        ref.views[i].mask = scene.views[i].mask;
    }
    return ref;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw gnfr::IoError("cannot write " + path);
    f << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generalizable neural-field renderer with flare-occupancy masking"};
    app.require_subcommand(1);

    // ---- synth --------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate procedural data");
    synth->require_subcommand(1);

    struct {
        std::string out;
        int count = 8, res = 128;
        uint64_t seed = 1;
    } tex;
    auto* synth_tex = synth->add_subcommand("textures", "Procedural base images");
    synth_tex->add_option("--out", tex.out)->required();
    synth_tex->add_option("--count", tex.count);
    synth_tex->add_option("--res", tex.res);
    synth_tex->add_option("--seed", tex.seed);

    auto* synth_pat = synth->add_subcommand("patterns", "Procedural flare patterns");
    struct {
        std::string out;
        int count = 4, res = 128;
        uint64_t seed = 2;
    } pat;
    synth_pat->add_option("--out", pat.out)->required();
    synth_pat->add_option("--count", pat.count);
    synth_pat->add_option("--res", pat.res);
    synth_pat->add_option("--seed", pat.seed);

    struct {
        std::string images, patterns, out;
        int count = 100;
        uint64_t seed = 3;
    } corpus;
    auto* synth_corpus = synth->add_subcommand("corpus", "Flare/clean/mask training triples");
    synth_corpus->add_option("--images", corpus.images)->required();
    synth_corpus->add_option("--patterns", corpus.patterns)->required();
    synth_corpus->add_option("--count", corpus.count);
    synth_corpus->add_option("--seed", corpus.seed);
    synth_corpus->add_option("--out", corpus.out)->required();

    struct {
        std::string preset = "plane", flare, out;
        int views = 8, res = 64;
        double arc = 60.0, radius = 4.0, flare_prob = 1.0;
        uint64_t seed = 4;
    } scn;
    auto* synth_scene = synth->add_subcommand("scene", "Posed toy scene (optionally flared)");
    synth_scene->add_option("--preset", scn.preset)
        ->check(CLI::IsMember({"plane", "box"}));
    synth_scene->add_option("--views", scn.views);
    synth_scene->add_option("--res", scn.res);
    synth_scene->add_option("--arc", scn.arc);
    synth_scene->add_option("--radius", scn.radius);
    synth_scene->add_option("--seed", scn.seed);
    synth_scene->add_option("--flare", scn.flare, "Flare pattern directory");
    synth_scene->add_option("--flare-prob", scn.flare_prob,
                            "Per-view probability of compositing flare");
    synth_scene->add_option("--out", scn.out)->required();

    // ---- train-fmg ----------------------------------------------------------
    struct {
        std::string corpus, out;
        int iters = 2000, base_channels = 16;
        double lr = 1e-3, w_pos = 5.0, w_neg = 1.0;
        uint64_t seed = 1;
    } tf;
    auto* train_fmg_cmd = app.add_subcommand("train-fmg", "Train the flare-occupancy network");
    train_fmg_cmd->add_option("--corpus", tf.corpus)->required();
    train_fmg_cmd->add_option("--iters", tf.iters);
    train_fmg_cmd->add_option("--lr", tf.lr);
    train_fmg_cmd->add_option("--w-pos", tf.w_pos);
    train_fmg_cmd->add_option("--w-neg", tf.w_neg);
    train_fmg_cmd->add_option("--base-channels", tf.base_channels);
    train_fmg_cmd->add_option("--seed", tf.seed);
    train_fmg_cmd->add_option("--out", tf.out)->required();

    // ---- infer-mask ---------------------------------------------------------
    struct {
        std::string ckpt, image, out;
    } im;
    auto* infer_cmd = app.add_subcommand("infer-mask", "Run the mask network on one image");
    infer_cmd->add_option("--ckpt", im.ckpt)->required();
    infer_cmd->add_option("--image", im.image)->required();
    infer_cmd->add_option("--out", im.out)->required();

    // ---- dict ---------------------------------------------------------------
    struct {
        std::vector<std::string> scenes;
        std::string out;
        uint64_t seed = 1;
        double threshold = 0.10;
        bool ignore_occupancy = false;
    } dc;
    auto* dict_cmd = app.add_subcommand("dict", "Build the target/source view dictionary");
    dict_cmd->add_option("--scene", dc.scenes)->required();
    dict_cmd->add_option("--seed", dc.seed);
    dict_cmd->add_option("--threshold", dc.threshold);
    dict_cmd->add_flag("--ignore-occupancy", dc.ignore_occupancy);
    dict_cmd->add_option("--out", dc.out)->required();

    // ---- train / finetune ---------------------------------------------------
    struct TrainArgs {
        std::vector<std::string> scenes;
        std::string out, mask_mode = "annotated", from, heldout;
        int iters = 2000, rays = 256, m_samples = 32, feature_dim = 32, n_blocks = 2,
            n_heads = 4;
        double lr = 1e-3, lr_final = 1e-5, threshold = 0.10;
        uint64_t seed = 1;
        bool no_masked_loss = false, no_view_sampler = false, no_point_sampler = false,
             no_renorm = false, unmasked_only = false;
    };
    TrainArgs tr;
    auto add_train_opts = [&](CLI::App* c, TrainArgs& a, bool with_from) {
        c->add_option("--scene", a.scenes)->required();
        c->add_option("--iters", a.iters);
        c->add_option("--rays", a.rays);
        c->add_option("--m-samples", a.m_samples);
        c->add_option("--feature-dim", a.feature_dim);
        c->add_option("--blocks", a.n_blocks);
        c->add_option("--heads", a.n_heads);
        c->add_option("--lr", a.lr);
        c->add_option("--lr-final", a.lr_final);
        c->add_option("--threshold", a.threshold);
        c->add_option("--seed", a.seed);
        c->add_option("--mask-mode", a.mask_mode);
        c->add_flag("--no-masked-loss", a.no_masked_loss);
        c->add_flag("--no-view-sampler", a.no_view_sampler);
        c->add_flag("--no-point-sampler", a.no_point_sampler);
        c->add_flag("--no-renormalize", a.no_renorm);
        c->add_flag("--sample-unmasked-only", a.unmasked_only);
        c->add_option("--heldout", a.heldout,
                      "Comma-separated view indices excluded from training");
        if (with_from) c->add_option("--from", a.from)->required();
        c->add_option("--out", a.out)->required();
    };
    auto* train_cmd = app.add_subcommand("train", "Train the renderer");
    add_train_opts(train_cmd, tr, false);
    TrainArgs ft;
    auto* finetune_cmd = app.add_subcommand("finetune", "Continue training from a checkpoint");
    add_train_opts(finetune_cmd, ft, true);

    // ---- render -------------------------------------------------------------
    struct {
        std::string ckpt, scene, out, target = "all", mask_mode = "annotated";
        int n = 4;
        double k = 1.5;
    } rn;
    auto* render_cmd = app.add_subcommand("render", "Render target views from sources");
    render_cmd->add_option("--ckpt", rn.ckpt)->required();
    render_cmd->add_option("--scene", rn.scene)->required();
    render_cmd->add_option("--target", rn.target, "view index or 'all'");
    render_cmd->add_option("--n", rn.n);
    render_cmd->add_option("--k", rn.k);
    render_cmd->add_option("--mask-mode", rn.mask_mode);
    render_cmd->add_option("--out", rn.out)->required();

    // ---- eval / ablate ------------------------------------------------------
    struct {
        std::string ckpt, scene, clean, renders, out, heldout, mask_mode = "annotated";
        int n = 4;
        double k = 1.5;
    } ev;
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM against ground truth");
    eval_cmd->add_option("--ckpt", ev.ckpt, "Render held-out views with this checkpoint");
    eval_cmd->add_option("--scene", ev.scene)->required();
    eval_cmd->add_option("--clean", ev.clean, "Clean ground-truth scene directory");
    eval_cmd->add_option("--heldout", ev.heldout, "Comma-separated held-out view indices");
    eval_cmd->add_option("--renders", ev.renders, "Evaluate an existing render directory");
    eval_cmd->add_option("--n", ev.n);
    eval_cmd->add_option("--k", ev.k);
    eval_cmd->add_option("--mask-mode", ev.mask_mode);
    eval_cmd->add_option("--out", ev.out);

    struct {
        std::string a, b, scene, clean, out, heldout, mask_mode = "annotated";
        int n = 4;
        double k = 1.5;
    } ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "Compare two checkpoints on held-out views");
    ablate_cmd->add_option("--a", ab.a)->required();
    ablate_cmd->add_option("--b", ab.b)->required();
    ablate_cmd->add_option("--scene", ab.scene)->required();
    ablate_cmd->add_option("--clean", ab.clean);
    ablate_cmd->add_option("--heldout", ab.heldout)->required();
    ablate_cmd->add_option("--n", ab.n);
    ablate_cmd->add_option("--k", ab.k);
    ablate_cmd->add_option("--mask-mode", ab.mask_mode);
    ablate_cmd->add_option("--out", ab.out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_tex->parsed()) {
            fs::create_directories(tex.out);
            uint64_t seed = seed_override(tex.seed);
            for (int i = 0; i < tex.count; ++i) {
                char name[16];
                std::snprintf(name, sizeof(name), "%03d.png", i);
                gnfr::save_image_png(
                    (fs::path(tex.out) / name).string(),
                    gnfr::generate_texture_image(tex.res, tex.res, gnfr::derive_seed(seed, i)));
            }
            std::printf("wrote %d textures to %s\n", tex.count, tex.out.c_str());
        } else if (synth_pat->parsed()) {
            fs::create_directories(pat.out);
            uint64_t seed = seed_override(pat.seed);
            for (int i = 0; i < pat.count; ++i) {
                char name[24];
                gnfr::FlarePattern fp =
                    gnfr::generate_flare_pattern(pat.res, pat.res, gnfr::derive_seed(seed, i));
                std::snprintf(name, sizeof(name), "%03d.png", i);
                gnfr::save_image_png((fs::path(pat.out) / name).string(), fp.image);
                std::snprintf(name, sizeof(name), "%03d_mask.png", i);
                gnfr::save_mask_png((fs::path(pat.out) / name).string(), fp.mask);
            }
            std::printf("wrote %d flare patterns to %s\n", pat.count, pat.out.c_str());
        } else if (synth_corpus->parsed()) {
            gnfr::build_flare_corpus(corpus.images, corpus.patterns, corpus.count,
                                     seed_override(corpus.seed), corpus.out);
            std::printf("wrote %d triples to %s\n", corpus.count, corpus.out.c_str());
        } else if (synth_scene->parsed()) {
            gnfr::ToySceneConfig cfg;
            cfg.preset = scn.preset == "box" ? gnfr::ToyPreset::box : gnfr::ToyPreset::plane;
            cfg.views = scn.views;
            cfg.res = scn.res;
            cfg.arc_degrees = scn.arc;
            cfg.radius = scn.radius;
            uint64_t seed = seed_override(scn.seed);
            gnfr::SceneDataset scene = gnfr::generate_toy_scene(cfg, seed);
            if (!scn.flare.empty()) {
                auto patterns = gnfr::load_flare_patterns(scn.flare);
                gnfr::add_flare_to_scene(scene, patterns, gnfr::derive_seed(seed, 0xf1a2e),
                                         scn.flare_prob);
            }
            gnfr::write_scene(scene, scn.out);
            std::printf("wrote scene '%s' (%d views) to %s\n", scene.scene_id.c_str(),
                        scn.views, scn.out.c_str());
        } else if (train_fmg_cmd->parsed()) {
            gnfr::SegConfig cfg;
            cfg.base_channels = tf.base_channels;
            uint64_t seed = seed_override(tf.seed);
            gnfr::SegNet net(cfg, seed);
            gnfr::SegCorpus data = gnfr::load_seg_corpus(tf.corpus);
            gnfr::SegTrainConfig tc;
            tc.iters = tf.iters;
            tc.lr = tf.lr;
            tc.seed = seed;
            tc.w_pos = tf.w_pos;
            tc.w_neg = tf.w_neg;
            gnfr::SegMetrics m = gnfr::train_fmg(net, data, tc);
            json manifest;
            manifest["kind"] = "fmg";
            manifest["base_channels"] = cfg.base_channels;
            manifest["bins"] = cfg.bins;
            manifest["init_seed"] = seed;
            gnfr::nn::save_checkpoint(tf.out, manifest.dump(), net.params());
            std::printf("held-out mIoU %.4f mAcc %.4f (flare IoU %.4f recall %.4f)\n", m.miou,
                        m.macc, m.iou_flare, m.acc_flare);
        } else if (infer_cmd->parsed()) {
            gnfr::SegNet net = segnet_from_checkpoint(im.ckpt);
            gnfr::Image img = gnfr::load_image_png(im.image);
            gnfr::OccupancyMask mask = net.infer_mask(img);
            gnfr::save_mask_png(im.out, mask);
            std::printf("occupancy %.4f -> %s\n", mask.occupancy, im.out.c_str());
        } else if (dict_cmd->parsed()) {
            std::vector<gnfr::SceneDataset> scenes;
            for (const auto& d : dc.scenes) scenes.push_back(gnfr::load_scene(d));
            std::vector<std::string> skipped;
            auto dict = gnfr::build_dictionary(scenes, seed_override(dc.seed), {}, &skipped,
                                               dc.threshold, dc.ignore_occupancy);
            json j;
            j["entries"] = json::array();
            for (const auto& e : dict) {
                json d;
                d["scene"] = e.scene_id;
                d["target"] = e.target_index;
                d["sources"] = e.source_indices;
                d["pool"] = e.pool_size;
                d["k"] = e.k;
                d["n"] = e.n;
                j["entries"].push_back(d);
            }
            j["skipped_scenes"] = skipped;
            write_text(dc.out, j.dump(2));
            std::printf("%zu dictionary entries -> %s\n", dict.size(), dc.out.c_str());
        } else if (train_cmd->parsed() || finetune_cmd->parsed()) {
            TrainArgs& a = train_cmd->parsed() ? tr : ft;
            uint64_t seed = seed_override(a.seed);
            std::vector<gnfr::SceneDataset> scenes;
            for (const auto& d : a.scenes) {
                scenes.push_back(gnfr::load_scene(d));
                apply_mask_mode(scenes.back(), a.mask_mode);
            }
            gnfr::GnfrRenderer net = [&]() {
                if (!a.from.empty()) return renderer_from_checkpoint(a.from);
                gnfr::RendererConfig cfg;
                cfg.feature_dim = a.feature_dim;
                cfg.n_blocks = a.n_blocks;
                cfg.n_heads = a.n_heads;
                cfg.m_samples = a.m_samples;
                cfg.use_point_sampler = !a.no_point_sampler;
                cfg.attn_mask_mode = a.no_renorm ? gnfr::AttnMaskMode::multiply_raw
                                                 : gnfr::AttnMaskMode::multiply_renormalize;
                return gnfr::GnfrRenderer(cfg, seed);
            }();
            gnfr::TrainConfig tc;
            tc.iters = a.iters;
            tc.rays_per_iter = a.rays;
            tc.lr = a.lr;
            tc.lr_final = a.lr_final;
            tc.seed = seed;
            tc.use_masked_loss = !a.no_masked_loss;
            tc.use_view_sampler = !a.no_view_sampler;
            tc.sample_unmasked_only = a.unmasked_only;
            if (!a.heldout.empty()) tc.heldout = parse_index_list(a.heldout);
            tc.occupancy_threshold = a.threshold;
            tc.checkpoint_out = a.out;
            tc.manifest_json = renderer_manifest(net.config(), seed).dump();
            gnfr::TrainReport rep = gnfr::train_renderer(net, scenes, tc);
            std::printf("final loss %.6f (tail mean %.6f), %d dictionary entries -> %s\n",
                        rep.final_loss, rep.mean_tail_loss, rep.dict_entries, a.out.c_str());
        } else if (render_cmd->parsed()) {
            gnfr::GnfrRenderer net = renderer_from_checkpoint(rn.ckpt);
            gnfr::SceneDataset scene = gnfr::load_scene(rn.scene);
            bool no_masks = rn.mask_mode == "none";
            apply_mask_mode(scene, rn.mask_mode);
            std::vector<int> targets;
            if (rn.target == "all")
                for (size_t i = 0; i < scene.views.size(); ++i)
                    targets.push_back(static_cast<int>(i));
            else
                targets.push_back(std::stoi(rn.target));
            fs::create_directories(rn.out);
            for (int t : targets) {
                gnfr::ViewSelection sel = gnfr::select_sources_excluding(
                    scene, t, rn.n, rn.k, {}, /*ignore_occupancy=*/no_masks);
                gnfr::Image img = net.render_image(scene, scene.views[t], sel);
                std::string path = gnfr::save_rendered(scene.views[t].id, img, rn.out);
                std::printf("rendered %s\n", path.c_str());
            }
        } else if (eval_cmd->parsed()) {
            if (ev.renders.empty() == ev.ckpt.empty())
                throw CLI::ValidationError("eval needs exactly one of --renders or --ckpt");
            gnfr::SceneDataset scene = gnfr::load_scene(ev.scene);
            std::string renders = ev.renders;
            if (!ev.ckpt.empty()) {
                if (ev.heldout.empty())
                    throw CLI::ValidationError("--ckpt evaluation requires --heldout");
                if (ev.out.empty())
                    throw CLI::ValidationError("--ckpt evaluation requires --out");
                bool no_masks = ev.mask_mode == "none";
                apply_mask_mode(scene, ev.mask_mode);
                gnfr::GnfrRenderer net = renderer_from_checkpoint(ev.ckpt);
                renders = (fs::path(ev.out) / "renders").string();
                render_heldout(net, scene, parse_index_list(ev.heldout), ev.n, ev.k, no_masks,
                               renders);
            }
            gnfr::SceneDataset ref = eval_reference(scene, ev.clean);
            gnfr::EvalSummary sum = gnfr::evaluate_renders(ref, renders);
            std::string js = sum.to_json();
            if (!ev.out.empty()) {
                fs::create_directories(ev.out);
                write_text((fs::path(ev.out) / "report.json").string(), js);
            }
            std::printf("%s\n", js.c_str());
        } else if (ablate_cmd->parsed()) {
            gnfr::SceneDataset scene = gnfr::load_scene(ab.scene);
            bool no_masks = ab.mask_mode == "none";
            apply_mask_mode(scene, ab.mask_mode);
            std::vector<int> heldout = parse_index_list(ab.heldout);
            fs::create_directories(ab.out);
            std::string dir_a = (fs::path(ab.out) / "a").string();
            std::string dir_b = (fs::path(ab.out) / "b").string();
            {
                gnfr::GnfrRenderer net_a = renderer_from_checkpoint(ab.a);
                render_heldout(net_a, scene, heldout, ab.n, ab.k, no_masks, dir_a);
            }
            {
                gnfr::GnfrRenderer net_b = renderer_from_checkpoint(ab.b);
                render_heldout(net_b, scene, heldout, ab.n, ab.k, no_masks, dir_b);
            }
            gnfr::SceneDataset ref = eval_reference(scene, ab.clean);
            gnfr::EvalSummary a_sum = gnfr::evaluate_renders(ref, dir_a);
            gnfr::EvalSummary b_sum = gnfr::evaluate_renders(ref, dir_b);
            write_text((fs::path(ab.out) / "a_report.json").string(), a_sum.to_json());
            write_text((fs::path(ab.out) / "b_report.json").string(), b_sum.to_json());
            std::string md = gnfr::ablation_markdown(a_sum, b_sum);
            write_text((fs::path(ab.out) / "ablation.md").string(), md);
            for (const auto& v : ref.views) {
                fs::path pa = fs::path(dir_a) / (v.id + ".png");
                fs::path pb = fs::path(dir_b) / (v.id + ".png");
                if (!fs::exists(pa) || !fs::exists(pb)) continue;
                gnfr::write_difference_heatmap(
                    gnfr::load_image_png(pa.string()), gnfr::load_image_png(pb.string()),
                    (fs::path(ab.out) / (v.id + "_diff.png")).string());
            }
            std::printf("%s", md.c_str());
        }
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
