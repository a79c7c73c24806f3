#include "gnfr/scene_io.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gnfr {

OccupancyMask OccupancyMask::from_bits(int h, int w, std::vector<uint8_t> bits) {
    OccupancyMask m;
    m.h = h;
    m.w = w;
    m.bits = std::move(bits);
    size_t ones = 0;
    for (uint8_t b : m.bits) ones += b;
    m.occupancy = static_cast<double>(ones) / (static_cast<double>(h) * w);
    return m;
}

uint8_t linear_to_byte(double v) {
    v = std::min(std::max(v, 0.0), 1.0);
    return static_cast<uint8_t>(std::lround(255.0 * std::pow(v, 1.0 / 2.2)));
}

double byte_to_linear(uint8_t b) { return std::pow(b / 255.0, 2.2); }

Image load_image_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw MissingFile("cannot read image: " + path);
    Image img(m.rows, m.cols, 3);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            auto px = m.at<cv::Vec3b>(y, x);  // BGR
            img.at(y, x, 0) = byte_to_linear(px[2]);
            img.at(y, x, 1) = byte_to_linear(px[1]);
            img.at(y, x, 2) = byte_to_linear(px[0]);
        }
    return img;
}

void save_image_png(const std::string& path, const Image& img) {
    if (img.c != 3) throw IoError("save_image_png expects 3 channels");
    for (double v : img.data)
        if (!std::isfinite(v)) throw IoError("non-finite pixel value writing " + path);
    cv::Mat m(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            m.at<cv::Vec3b>(y, x) = cv::Vec3b(linear_to_byte(img.at(y, x, 2)),
                                              linear_to_byte(img.at(y, x, 1)),
                                              linear_to_byte(img.at(y, x, 0)));
    if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

OccupancyMask load_mask_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw MissingFile("cannot read mask: " + path);
    std::vector<uint8_t> bits(static_cast<size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            bits[static_cast<size_t>(y) * m.cols + x] = m.at<uint8_t>(y, x) >= 128 ? 1 : 0;
    return OccupancyMask::from_bits(m.rows, m.cols, std::move(bits));
}

void save_mask_png(const std::string& path, const OccupancyMask& mask) {
    cv::Mat m(mask.h, mask.w, CV_8UC1);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) m.at<uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
    if (!cv::imwrite(path, m)) throw IoError("cannot write mask: " + path);
}

void validate_view(const CameraView& v, const std::string& name) {
    double fx = v.K(0, 0), fy = v.K(1, 1), cx = v.K(0, 2), cy = v.K(1, 2);
    if (fx <= 0 || fy <= 0) throw BadPose(name + ": non-positive focal length");
    if (cx < 0 || cx >= v.image.w || cy < 0 || cy >= v.image.h)
        throw BadPose(name + ": principal point outside image");
    Eigen::Matrix3d r = v.rotation();
    double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err >= 1e-5)
        throw BadPose(name + ": rotation not orthonormal (err=" + std::to_string(err) + ")");
    if (!(v.near > 0.0 && v.near < v.far))
        throw BadBounds(name + ": need 0 < near < far");
    if (v.mask && (v.mask->h != v.image.h || v.mask->w != v.image.w))
        throw ShapeMismatch(name + ": mask size " + std::to_string(v.mask->w) + "x" +
                            std::to_string(v.mask->h) + " != image " +
                            std::to_string(v.image.w) + "x" + std::to_string(v.image.h));
}

SceneDataset load_scene(const std::string& root) {
    fs::path r(root);
    fs::path cam = r / "cameras.json";
    if (!fs::exists(cam)) throw MissingFile(cam.string());
    std::ifstream f(cam);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + cam.string() + ": " + e.what());
    }
    SceneDataset scene;
    scene.scene_id = r.filename().string();
    scene.split = j.value("split", "train") == "eval" ? Split::eval : Split::train;
    int h = j.at("h"), w = j.at("w");
    double near = j.at("near"), far = j.at("far");
    for (const auto& jv : j.at("views")) {
        CameraView v;
        std::string file = jv.at("file");
        fs::path img_path = r / file;
        if (!fs::exists(img_path)) throw MissingFile(img_path.string());
        v.image = load_image_png(img_path.string());
        v.id = fs::path(file).stem().string();
        if (v.image.h != h || v.image.w != w)
            throw ShapeMismatch(file + ": image size disagrees with cameras.json");
        auto k = jv.at("K").get<std::vector<double>>();
        auto p = jv.at("c2w").get<std::vector<double>>();
        if (k.size() != 9 || p.size() != 12)
            throw IoError(file + ": K must have 9 and c2w 12 entries");
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 3; ++c) v.K(i, c) = k[i * 3 + c];
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 4; ++c) v.c2w(i, c) = p[i * 4 + c];
        v.near = near;
        v.far = far;
        if (jv.contains("mask") && !jv.at("mask").is_null()) {
            fs::path mp = r / jv.at("mask").get<std::string>();
            if (!fs::exists(mp)) throw MissingFile(mp.string());
            v.mask = load_mask_png(mp.string());
        }
        validate_view(v, file);
        scene.views.push_back(std::move(v));
    }
    if (scene.views.size() < 3)
        throw IoError(root + ": scene needs at least 3 views, got " +
                      std::to_string(scene.views.size()));
    return scene;
}

void write_scene(const SceneDataset& scene, const std::string& root) {
    fs::path r(root);
    fs::create_directories(r / "images");
    bool any_mask = false;
    for (const auto& v : scene.views)
        if (v.mask) any_mask = true;
    if (any_mask) fs::create_directories(r / "masks");
    json j;
    j["h"] = scene.height();
    j["w"] = scene.width();
    j["near"] = scene.views.empty() ? 0.0 : scene.views[0].near;
    j["far"] = scene.views.empty() ? 0.0 : scene.views[0].far;
    j["split"] = scene.split == Split::eval ? "eval" : "train";
    j["views"] = json::array();
    for (size_t i = 0; i < scene.views.size(); ++i) {
        const auto& v = scene.views[i];
        char name[16];
        std::snprintf(name, sizeof(name), "%03zu.png", i);
        std::string img_rel = std::string("images/") + name;
        save_image_png((r / img_rel).string(), v.image);
        json jv;
        jv["file"] = img_rel;
        if (v.mask) {
            std::string mask_rel = std::string("masks/") + name;
            save_mask_png((r / mask_rel).string(), *v.mask);
            jv["mask"] = mask_rel;
        } else {
            jv["mask"] = nullptr;
        }
        std::vector<double> k(9), p(12);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) k[a * 3 + b] = v.K(a, b);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 4; ++b) p[a * 4 + b] = v.c2w(a, b);
        jv["K"] = k;
        jv["c2w"] = p;
        j["views"].push_back(jv);
    }
    std::ofstream f(r / "cameras.json");
    if (!f) throw IoError("cannot write " + (r / "cameras.json").string());
    f << j.dump(1) << "\n";
}

std::string save_rendered(const std::string& view_id, const Image& image,
                          const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::path p = fs::path(out_dir) / (view_id + ".png");
    save_image_png(p.string(), image);
    return p.string();
}

}  // namespace gnfr
