#include "stereosparse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stereosparse/errors.hpp"
#include "stereosparse/rng.hpp"
#include "stereosparse/sten.hpp"

namespace stereosparse {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

}  // namespace

Image Image::blank(int h, int w, std::uint8_t value) {
    if (h < 1 || w < 1) throw ShapeError("image extents must be positive");
    Image img;
    img.h = h;
    img.w = w;
    img.data.assign(static_cast<std::size_t>(h) * w * 3, value);
    return img;
}

std::uint8_t& Image::at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * w + c) * 3 + ch];
}

std::uint8_t Image::at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * w + c) * 3 + ch];
}

namespace {

// Skips PPM whitespace and '#' comments, then parses one decimal integer.
int ppm_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* what) {
    while (pos < b.size()) {
        std::uint8_t c = b[pos];
        if (c == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(c)) {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size())
        throw ParseError("PPM: missing " + std::string(what) + " at byte offset " + std::to_string(pos));
    if (!std::isdigit(b[pos]))
        throw ParseError("PPM: bad " + std::string(what) + " at byte offset " + std::to_string(pos));
    long v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
        v = v * 10 + (b[pos] - '0');
        if (v > 1 << 20)
            throw ParseError("PPM: " + std::string(what) + " out of range at byte offset " +
                             std::to_string(pos));
        ++pos;
    }
    return static_cast<int>(v);
}

}  // namespace

Image parse_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw ParseError("PPM: bad magic at byte offset 0 (want P6)");
    std::size_t pos = 2;
    int w = ppm_int(bytes, pos, "width");
    int h = ppm_int(bytes, pos, "height");
    int maxval = ppm_int(bytes, pos, "maxval");
    if (w < 1 || h < 1)
        throw ParseError("PPM: non-positive dimensions " + std::to_string(w) + "x" + std::to_string(h));
    if (maxval != 255)
        throw ParseError("PPM: unsupported maxval " + std::to_string(maxval) + " (want 255)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw ParseError("PPM: missing whitespace after maxval at byte offset " + std::to_string(pos));
    ++pos;
    std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() - pos < need)
        throw ParseError("PPM: truncated pixel data at byte offset " + std::to_string(bytes.size()) +
                         " (need " + std::to_string(need + pos) + " bytes)");
    Image img;
    img.h = h;
    img.w = w;
    img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

std::vector<std::uint8_t> ppm_encode(const Image& img) {
    std::string header = "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

Image read_ppm(const std::string& path) { return parse_ppm(read_file_bytes(path)); }

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    auto bytes = ppm_encode(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError("short write to " + path);
}

std::vector<BoundingBox> parse_kitti_labels(const std::string& text) {
    std::vector<BoundingBox> boxes;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<std::string> tok;
        std::string t;
        while (fields >> t) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() < 15)
            throw ParseError("KITTI labels line " + std::to_string(line_no) + ": expected 15 fields, got " +
                             std::to_string(tok.size()));
        double vals[4];
        for (int i = 0; i < 4; ++i) {
            try {
                std::size_t used = 0;
                vals[i] = std::stod(tok[static_cast<std::size_t>(4 + i)], &used);
                if (used != tok[static_cast<std::size_t>(4 + i)].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ParseError("KITTI labels line " + std::to_string(line_no) + ": bad number '" +
                                 tok[static_cast<std::size_t>(4 + i)] + "' in field " + std::to_string(5 + i));
            }
        }
        if (tok[0] != "Car" && tok[0] != "Van" && tok[0] != "Truck") continue;
        BoundingBox b;
        b.class_name = tok[0];
        b.left = vals[0];
        b.top = vals[1];
        b.right = vals[2];
        b.bottom = vals[3];
        boxes.push_back(std::move(b));
    }
    return boxes;
}

Tensor window_labels(const std::vector<BoundingBox>& boxes) {
    Tensor grid = Tensor::zeros({kGridH, kGridW});
    for (const BoundingBox& b : boxes) {
        for (int r = 0; r < kGridH; ++r) {
            for (int c = 0; c < kGridW; ++c) {
                double x0 = c * kWindowW, x1 = x0 + kWindowW;
                double y0 = r * kWindowH, y1 = y0 + kWindowH;
                double ix = std::min(b.right, x1) - std::max(b.left, x0);
                double iy = std::min(b.bottom, y1) - std::max(b.top, y0);
                if (ix > 0 && iy > 0) grid.data[static_cast<std::size_t>(r) * kGridW + c] = 1.0f;
            }
        }
    }
    return grid;
}

Example preprocess(const StereoClip& clip, const std::vector<BoundingBox>& boxes) {
    int h = clip.left[0].h, w = clip.left[0].w;
    for (const Image* img : {&clip.left[0], &clip.left[1], &clip.left[2], &clip.right[0],
                             &clip.right[1], &clip.right[2]}) {
        if (img->h != h || img->w != w)
            throw ShapeError("stereo clip frames disagree: " + std::to_string(img->h) + "x" +
                             std::to_string(img->w) + " vs " + std::to_string(h) + "x" + std::to_string(w));
    }

    Tensor full = Tensor::zeros({1, 3, h, w, 6});
    for (int t = 0; t < 3; ++t) {
        const Image& L = clip.left[static_cast<std::size_t>(t)];
        const Image& R = clip.right[static_cast<std::size_t>(t)];
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                for (int ch = 0; ch < 3; ++ch) {
                    full.at5(0, t, r, c, ch) = static_cast<float>(L.at(r, c, ch));
                    full.at5(0, t, r, c, 3 + ch) = static_cast<float>(R.at(r, c, ch));
                }
            }
        }
    }

    Tensor down = downsample_area(full, kFrameH, kFrameW);

    Example ex;
    TensorStats st = stats(down);
    double sd = st.std;
    if (sd < 1e-6) {
        sd = 1.0;
        ex.degenerate_std = true;
    }
    for (float& v : down.data) v = static_cast<float>((v - st.mean) / sd);

    ex.scale_h = static_cast<double>(kFrameH) / h;
    ex.scale_w = static_cast<double>(kFrameW) / w;
    std::vector<BoundingBox> scaled;
    scaled.reserve(boxes.size());
    for (const BoundingBox& b : boxes) {
        BoundingBox s = b;
        s.left = std::clamp(b.left * ex.scale_w, 0.0, static_cast<double>(kFrameW));
        s.right = std::clamp(b.right * ex.scale_w, 0.0, static_cast<double>(kFrameW));
        s.top = std::clamp(b.top * ex.scale_h, 0.0, static_cast<double>(kFrameH));
        s.bottom = std::clamp(b.bottom * ex.scale_h, 0.0, static_cast<double>(kFrameH));
        scaled.push_back(s);
    }
    ex.labels = window_labels(scaled);
    ex.input = std::move(down);
    ex.input.dims = {3, kFrameH, kFrameW, 6};
    return ex;
}

namespace {

struct SynthObject {
    double x0, y0, w, h;       // left view, t = 0
    double disparity;
    double vx;
    double c1[3], c2[3];       // stripe colors
    int period;
    int orient;                // 0 horizontal stripes, 1 vertical, 2 diagonal
};

// Hull of the object's positions over frames and views, for overlap rejection.
void object_hull(const SynthObject& o, double* x0, double* x1, double* y0, double* y1) {
    double lo = std::min(o.x0, o.x0 + 2 * o.vx) - o.disparity;
    double hi = std::max(o.x0, o.x0 + 2 * o.vx) + o.w;
    *x0 = lo;
    *x1 = hi;
    *y0 = o.y0;
    *y1 = o.y0 + o.h;
}

void draw_object(Image& img, const SynthObject& o, double x_shift) {
    int xa = static_cast<int>(std::lround(o.x0 + x_shift));
    int ya = static_cast<int>(std::lround(o.y0));
    int xb = xa + static_cast<int>(std::lround(o.w));
    int yb = ya + static_cast<int>(std::lround(o.h));
    for (int r = std::max(0, ya); r < std::min(img.h, yb); ++r) {
        for (int c = std::max(0, xa); c < std::min(img.w, xb); ++c) {
            int lr = r - ya, lc = c - xa;  // object-local coordinates: texture moves with the object
            int phase;
            switch (o.orient) {
                case 0: phase = lr / o.period; break;
                case 1: phase = lc / o.period; break;
                default: phase = (lr + lc) / o.period; break;
            }
            const double* col = (phase % 2 == 0) ? o.c1 : o.c2;
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(col[ch]));
        }
    }
}

}  // namespace

SynthScene synth_scene(std::uint32_t seed, const SynthParams& params) {
    if (params.height < 16 || params.width < 32)
        throw ConfigError("synth scene extent too small");
    if (params.min_objects < 0 || params.max_objects < params.min_objects)
        throw ConfigError("synth object count range invalid");
    Rng rng(seed);
    int h = params.height, w = params.width;

    // Background: static gray blocks, identical in both views (zero disparity).
    Image bg = Image::blank(h, w);
    int block = 16;
    int bh = (h + block - 1) / block, bw = (w + block - 1) / block;
    std::vector<std::uint8_t> shades(static_cast<std::size_t>(bh) * bw);
    for (auto& s : shades) s = static_cast<std::uint8_t>(90 + rng.uniform_int(76));
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            std::uint8_t s = shades[static_cast<std::size_t>(r / block) * bw + c / block];
            for (int ch = 0; ch < 3; ++ch) bg.at(r, c, ch) = s;
        }

    int span = params.max_objects - params.min_objects;
    int n = params.min_objects + (span > 0 ? rng.uniform_int(span + 1) : 0);

    std::vector<SynthObject> objects;
    int attempts = 0;
    while (static_cast<int>(objects.size()) < n) {
        if (++attempts > 100)
            throw ConfigError("synth scene: no valid placement after 100 attempts (seed " +
                              std::to_string(seed) + ")");
        SynthObject o;
        o.w = 40 + rng.uniform_int(61);
        o.h = 24 + rng.uniform_int(25);
        if (!params.disparity_levels.empty()) {
            o.disparity = params.disparity_levels[static_cast<std::size_t>(
                rng.uniform_int(static_cast<int>(params.disparity_levels.size())))];
        } else {
            o.disparity = rng.uniform(params.min_disparity, params.max_disparity);
        }
        double sign = rng.uniform_int(2) == 0 ? -1.0 : 1.0;
        o.vx = sign * (params.velocity_scale * o.disparity + rng.uniform(-0.5, 0.5));
        double lo = o.disparity + std::max(0.0, -2 * o.vx) + 1;
        double hi = w - o.w - std::max(0.0, 2 * o.vx) - 1;
        double ylo = 1, yhi = h - o.h - 1;
        if (hi <= lo || yhi <= ylo) continue;
        o.x0 = rng.uniform(lo, hi);
        o.y0 = rng.uniform(ylo, yhi);
        o.period = 4 + rng.uniform_int(5);
        o.orient = rng.uniform_int(3);
        for (int ch = 0; ch < 3; ++ch) {
            o.c1[ch] = 30 + rng.uniform(0.0, 90.0);
            o.c2[ch] = 135 + rng.uniform(0.0, 90.0);
        }

        bool clash = false;
        double ax0, ax1, ay0, ay1;
        object_hull(o, &ax0, &ax1, &ay0, &ay1);
        for (const SynthObject& other : objects) {
            double bx0, bx1, by0, by1;
            object_hull(other, &bx0, &bx1, &by0, &by1);
            if (std::max(ax0, bx0) < std::min(ax1, bx1) && std::max(ay0, by0) < std::min(ay1, by1)) {
                clash = true;
                break;
            }
        }
        if (clash) continue;
        objects.push_back(o);
    }

    // Far to near, so nearer objects occlude.
    std::sort(objects.begin(), objects.end(),
              [](const SynthObject& a, const SynthObject& b) { return a.disparity < b.disparity; });

    SynthScene scene;
    for (int t = 0; t < 3; ++t) {
        scene.clip.left[static_cast<std::size_t>(t)] = bg;
        scene.clip.right[static_cast<std::size_t>(t)] = bg;
        for (const SynthObject& o : objects) {
            draw_object(scene.clip.left[static_cast<std::size_t>(t)], o, o.vx * t);
            draw_object(scene.clip.right[static_cast<std::size_t>(t)], o, o.vx * t - o.disparity);
        }
    }

    scene.disparity = Tensor::zeros({h, w});
    for (const SynthObject& o : objects) {
        int xa = static_cast<int>(std::lround(o.x0 + o.vx * 2));
        int ya = static_cast<int>(std::lround(o.y0));
        int xb = xa + static_cast<int>(std::lround(o.w));
        int yb = ya + static_cast<int>(std::lround(o.h));
        for (int r = std::max(0, ya); r < std::min(h, yb); ++r)
            for (int c = std::max(0, xa); c < std::min(w, xb); ++c)
                scene.disparity.data[static_cast<std::size_t>(r) * w + c] =
                    static_cast<float>(o.disparity);

        BoundingBox box;
        box.class_name = "Car";
        box.left = std::clamp(o.x0 + o.vx * 2, 0.0, static_cast<double>(w));
        box.right = std::clamp(o.x0 + o.vx * 2 + o.w, 0.0, static_cast<double>(w));
        box.top = std::clamp(o.y0, 0.0, static_cast<double>(h));
        box.bottom = std::clamp(o.y0 + o.h, 0.0, static_cast<double>(h));
        scene.boxes.push_back(std::move(box));
    }

    // Per-frame sensor noise, drawn in fixed frame order.
    if (params.noise > 0) {
        for (int t = 0; t < 3; ++t) {
            for (Image* img : {&scene.clip.left[static_cast<std::size_t>(t)],
                               &scene.clip.right[static_cast<std::size_t>(t)]}) {
                for (std::uint8_t& px : img->data) {
                    double v = px + params.noise * rng.normal();
                    px = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
                }
            }
        }
    }
    return scene;
}

Dataset::Dataset(std::vector<ManifestEntry> entries, std::string base_dir, SynthParams synth)
    : entries_(std::move(entries)), base_dir_(std::move(base_dir)), synth_(synth) {}

Dataset Dataset::split(const std::string& name) const {
    std::vector<ManifestEntry> kept;
    for (const ManifestEntry& e : entries_)
        if (e.split == name) kept.push_back(e);
    return Dataset(std::move(kept), base_dir_, synth_);
}

namespace {

std::string join_path(const std::string& base, const std::string& rel) {
    if (rel.empty() || rel.front() == '/' || base.empty()) return rel;
    return (std::filesystem::path(base) / rel).string();
}

nlohmann::json synth_params_to_json(const SynthParams& p) {
    nlohmann::json j;
    j["width"] = p.width;
    j["height"] = p.height;
    j["min_objects"] = p.min_objects;
    j["max_objects"] = p.max_objects;
    j["min_disparity"] = p.min_disparity;
    j["max_disparity"] = p.max_disparity;
    if (!p.disparity_levels.empty()) j["disparity_levels"] = p.disparity_levels;
    j["velocity_scale"] = p.velocity_scale;
    j["noise"] = p.noise;
    return j;
}

SynthParams synth_params_from_json(const nlohmann::json& j) {
    SynthParams p;
    p.width = j.value("width", p.width);
    p.height = j.value("height", p.height);
    p.min_objects = j.value("min_objects", p.min_objects);
    p.max_objects = j.value("max_objects", p.max_objects);
    p.min_disparity = j.value("min_disparity", p.min_disparity);
    p.max_disparity = j.value("max_disparity", p.max_disparity);
    if (j.contains("disparity_levels"))
        p.disparity_levels = j.at("disparity_levels").get<std::vector<double>>();
    p.velocity_scale = j.value("velocity_scale", p.velocity_scale);
    p.noise = j.value("noise", p.noise);
    return p;
}

}  // namespace

LabeledExample Dataset::load(int i) const {
    const ManifestEntry& e = entry(i);
    LabeledExample ex;
    ex.id = e.id;
    if (e.synth_seed) {
        SynthScene scene = synth_scene(*e.synth_seed, e.synth_params ? *e.synth_params : synth_);
        Example pre = preprocess(scene.clip, scene.boxes);
        ex.input = std::move(pre.input);
        ex.labels = std::move(pre.labels);
        return ex;
    }
    ex.input = read_sten(join_path(base_dir_, e.input_path));
    if (!e.labels_inline.empty()) {
        if (e.labels_inline.size() != static_cast<std::size_t>(kGridH * kGridW))
            throw ParseError("manifest entry " + e.id + ": inline labels need " +
                             std::to_string(kGridH * kGridW) + " values");
        ex.labels = Tensor::zeros({kGridH, kGridW});
        for (std::size_t j = 0; j < e.labels_inline.size(); ++j)
            ex.labels.data[j] = static_cast<float>(e.labels_inline[j]);
    } else if (!e.labels_path.empty()) {
        ex.labels = read_sten(join_path(base_dir_, e.labels_path));
    } else {
        throw ParseError("manifest entry " + e.id + ": no labels");
    }
    return ex;
}

Tensor disparity_to_frame(const Tensor& m) {
    if (m.ndim() != 2) throw ShapeError("disparity map must be 2-d, got " + dims_to_string(m.dims));
    int fh = m.dims[0] / kFrameH, fw = m.dims[1] / kFrameW;
    if (fh < 1 || fw < 1 || m.dims[0] % kFrameH != 0 || m.dims[1] % kFrameW != 0)
        throw ShapeError("disparity map " + dims_to_string(m.dims) +
                         " does not reduce to the frame grid");
    Tensor out = Tensor::zeros({kFrameH, kFrameW});
    for (int r = 0; r < kFrameH; ++r)
        for (int c = 0; c < kFrameW; ++c)
            out.data[static_cast<std::size_t>(r) * kFrameW + c] =
                m.data[static_cast<std::size_t>(r * fh) * m.dims[1] + c * fw] / static_cast<float>(fw);
    return out;
}

Tensor Dataset::load_disparity(int i) const {
    const ManifestEntry& e = entry(i);
    if (e.synth_seed) {
        SynthScene scene = synth_scene(*e.synth_seed, e.synth_params ? *e.synth_params : synth_);
        return disparity_to_frame(scene.disparity);
    }
    if (e.disparity_path.empty())
        throw ConfigError("manifest entry " + e.id + ": no disparity map");
    return read_sten(join_path(base_dir_, e.disparity_path));
}

LabeledDataset Dataset::labeled() const {
    LabeledDataset d;
    d.count = count();
    d.get = [this](int i) { return load(i); };
    return d;
}

Dataset read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            ManifestEntry e;
            e.id = j.at("id").get<std::string>();
            e.split = j.value("split", std::string("train"));
            if (j.contains("synth_seed")) e.synth_seed = j.at("synth_seed").get<std::uint32_t>();
            if (j.contains("synth_params")) e.synth_params = synth_params_from_json(j.at("synth_params"));
            e.input_path = j.value("input", std::string());
            if (j.contains("labels")) e.labels_inline = j.at("labels").get<std::vector<int>>();
            e.labels_path = j.value("labels_path", std::string());
            e.disparity_path = j.value("disparity", std::string());
            if (e.input_path.empty() && !e.synth_seed)
                throw ParseError("needs input or synth_seed");
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return Dataset(std::move(entries), std::filesystem::path(path).parent_path().string(),
                   SynthParams{});
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    for (const ManifestEntry& e : entries) {
        nlohmann::json j;
        j["id"] = e.id;
        j["split"] = e.split;
        if (e.synth_seed) j["synth_seed"] = *e.synth_seed;
        if (e.synth_params) j["synth_params"] = synth_params_to_json(*e.synth_params);
        if (!e.input_path.empty()) j["input"] = e.input_path;
        if (!e.labels_inline.empty()) j["labels"] = e.labels_inline;
        if (!e.labels_path.empty()) j["labels_path"] = e.labels_path;
        if (!e.disparity_path.empty()) j["disparity"] = e.disparity_path;
        out << j.dump() << "\n";
    }
    if (!out) throw ParseError("short write to " + path);
}

}  // namespace stereosparse
