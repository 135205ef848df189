#include "ron/data.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ron {

// ---------------------------------------------------------------- gen_shapes

namespace {

constexpr int kClassCircle = 1, kClassSquare = 2, kClassTriangle = 3;

void draw_shape(std::vector<uint8_t>& img, int S, const GtObject& obj,
                const std::array<uint8_t, 3>& color) {
    const int l = static_cast<int>(obj.box.l());
    const int t = static_cast<int>(obj.box.t());
    const int r = static_cast<int>(obj.box.r());
    const int b = static_cast<int>(obj.box.b());
    const double cx = obj.box.cx, cy = obj.box.cy;
    const double rx = obj.box.w / 2, ry = obj.box.h / 2;
    for (int y = std::max(0, t); y < std::min(S, b); ++y)
        for (int x = std::max(0, l); x < std::min(S, r); ++x) {
            const double px = x + 0.5, py = y + 0.5;
            bool inside = false;
            switch (obj.cls) {
                case kClassCircle: {
                    const double dx = (px - cx) / rx, dy = (py - cy) / ry;
                    inside = dx * dx + dy * dy <= 1.0;
                    break;
                }
                case kClassSquare:
                    inside = true;
                    break;
                case kClassTriangle: {
                    // apex top-center, base along the bottom edge
                    const double fy = (py - obj.box.t()) / obj.box.h;  // 0 at apex row
                    inside = std::abs(px - cx) <= fy * rx;
                    break;
                }
            }
            if (inside) {
                uint8_t* p = img.data() + (static_cast<size_t>(y) * S + x) * 3;
                p[0] = color[0];
                p[1] = color[1];
                p[2] = color[2];
            }
        }
}

}  // namespace

Dataset gen_shapes(int n, int image_size, uint64_t seed) {
    if (n < 1) throw ConfigError("gen_shapes: n must be >= 1");
    Dataset ds;
    ds.image_size = image_size;
    ds.class_names = {"__background__", "circle", "square", "triangle"};
    ds.samples.reserve(n);

    std::mt19937_64 rng(seed);
    const int S = image_size;
    const double max_side = 0.8 * S;

    for (int i = 0; i < n; ++i) {
        Sample smp;
        smp.size = S;
        {
            std::ostringstream id;
            id << "img_" << std::setw(6) << std::setfill('0') << i;
            smp.image_id = id.str();
        }
        const uint8_t bg = static_cast<uint8_t>(std::uniform_int_distribution<int>(40, 215)(rng));
        smp.pixels.assign(static_cast<size_t>(S) * S * 3, bg);

        const int count = std::uniform_int_distribution<int>(1, 4)(rng);
        for (int s = 0; s < count; ++s) {
            GtObject obj;
            bool placed = false;
            for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
                obj.cls = std::uniform_int_distribution<int>(1, 3)(rng);
                // mostly mid-sized objects, with tails spanning the full
                // small-to-large range so every anchor scale gets positives
                const bool tail = std::uniform_real_distribution<double>(0, 1)(rng) < 0.12;
                const double side =
                    tail ? std::uniform_real_distribution<double>(8.0, max_side)(rng)
                         : std::uniform_real_distribution<double>(0.16 * S, 0.56 * S)(rng);
                const double aspect =
                    std::exp2(std::uniform_real_distribution<double>(-0.5, 0.5)(rng));
                int w = std::max(8, static_cast<int>(std::lround(side * std::sqrt(aspect))));
                int h = std::max(8, static_cast<int>(std::lround(side / std::sqrt(aspect))));
                w = std::min(w, S - 2);
                h = std::min(h, S - 2);
                const int l = std::uniform_int_distribution<int>(0, S - w)(rng);
                const int t = std::uniform_int_distribution<int>(0, S - h)(rng);
                obj.box = Box::from_corners(l, t, l + w, t + h);
                placed = true;
                for (const GtObject& prev : smp.objects)
                    if (iou(obj.box, prev.box) > 0.1) {
                        placed = false;
                        break;
                    }
            }
            if (!placed) continue;

            std::array<uint8_t, 3> color{};
            for (;;) {
                int contrast = 0;
                for (auto& c : color) {
                    c = static_cast<uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
                    contrast = std::max(contrast, std::abs(static_cast<int>(c) - bg));
                }
                if (contrast >= 90) break;
            }
            draw_shape(smp.pixels, S, obj, color);
            smp.objects.push_back(obj);
        }
        ds.samples.push_back(std::move(smp));
    }
    return ds;
}

// ------------------------------------------------------------------- PPM I/O

void write_ppm(const fs::path& path, int width, int height, const std::vector<uint8_t>& rgb) {
    if (rgb.size() != static_cast<size_t>(width) * height * 3)
        throw DimensionError("write_ppm: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_ppm: cannot open " + path.string());
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw IoError("write_ppm: write failed for " + path.string());
}

std::vector<uint8_t> read_ppm(const fs::path& path, int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ppm: cannot open " + path.string());
    auto fail = [&](const std::string& what) {
        throw IoError("read_ppm: " + what + " in " + path.string() + " at byte " +
                      std::to_string(static_cast<long long>(in.tellg())));
    };
    std::string magic;
    in >> magic;
    if (magic != "P6") fail("not a binary P6 file");
    int maxval = 0;
    if (!(in >> width >> height >> maxval)) fail("malformed header");
    if (width <= 0 || height <= 0) fail("non-positive dimensions");
    if (maxval != 255) fail("unsupported maxval (expected 255)");
    in.get();  // single whitespace after maxval
    std::vector<uint8_t> rgb(static_cast<size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(rgb.size())) fail("truncated pixel data");
    return rgb;
}

// ------------------------------------------------------------------- VOC XML

void write_voc_xml(const fs::path& path, const Sample& sample,
                   const std::vector<std::string>& class_names) {
    std::ofstream out(path);
    if (!out) throw IoError("write_voc_xml: cannot open " + path.string());
    out << "<annotation>\n";
    out << "  <filename>" << sample.image_id << ".ppm</filename>\n";
    out << "  <size><width>" << sample.size << "</width><height>" << sample.size
        << "</height><depth>3</depth></size>\n";
    for (const GtObject& obj : sample.objects) {
        // internal 0-based half-open -> VOC 1-based inclusive
        out << "  <object>\n";
        out << "    <name>" << class_names.at(obj.cls) << "</name>\n";
        out << "    <difficult>0</difficult>\n";
        out << "    <bndbox>"
            << "<xmin>" << static_cast<long long>(obj.box.l()) + 1 << "</xmin>"
            << "<ymin>" << static_cast<long long>(obj.box.t()) + 1 << "</ymin>"
            << "<xmax>" << static_cast<long long>(obj.box.r()) << "</xmax>"
            << "<ymax>" << static_cast<long long>(obj.box.b()) << "</ymax>"
            << "</bndbox>\n";
        out << "  </object>\n";
    }
    out << "</annotation>\n";
}

namespace {

// Line-tracking cursor over a tag-structured document; enough for the
// PASCAL annotation schema, not a general XML parser.
struct XmlCursor {
    const std::string& text;
    const std::string& file;
    size_t pos = 0;

    int line_at(size_t p) const {
        return 1 + static_cast<int>(std::count(text.begin(), text.begin() + std::min(p, text.size()), '\n'));
    }

    [[noreturn]] void fail(const std::string& what, size_t p) const {
        throw IoError("parse_voc_xml: " + what + " in " + file + " at line " +
                      std::to_string(line_at(p)));
    }

    // Next occurrence of <tag> after pos; returns false if absent.
    bool seek(const std::string& tag) {
        const size_t p = text.find("<" + tag + ">", pos);
        if (p == std::string::npos) return false;
        pos = p + tag.size() + 2;
        return true;
    }

    std::string element(const std::string& tag) {
        const size_t open = text.find("<" + tag + ">", pos);
        if (open == std::string::npos) fail("missing <" + tag + ">", pos);
        const size_t start = open + tag.size() + 2;
        const size_t close = text.find("</" + tag + ">", start);
        if (close == std::string::npos) fail("unterminated <" + tag + ">", open);
        pos = close + tag.size() + 3;
        return text.substr(start, close - start);
    }

    int int_element(const std::string& tag) {
        const size_t at = pos;
        const std::string body = element(tag);
        try {
            return std::stoi(body);
        } catch (const std::exception&) {
            fail("non-integer <" + tag + ">", at);
        }
    }
};

}  // namespace

std::vector<GtObject> parse_voc_xml(const fs::path& path,
                                    const std::vector<std::string>& class_names,
                                    bool skip_difficult) {
    std::ifstream in(path);
    if (!in) throw IoError("parse_voc_xml: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const std::string file = path.string();

    XmlCursor cur{text, file};
    if (!cur.seek("annotation")) cur.fail("missing <annotation>", 0);

    std::vector<GtObject> objects;
    XmlCursor scan{text, file, cur.pos};
    while (scan.seek("object")) {
        XmlCursor obj_cur{text, file, scan.pos};
        const size_t obj_at = scan.pos;
        const std::string name = obj_cur.element("name");
        int difficult = 0;
        {
            XmlCursor d{text, file, scan.pos};
            const size_t next_obj = text.find("<object>", scan.pos);
            if (d.seek("difficult") && (next_obj == std::string::npos || d.pos < next_obj)) {
                d.pos -= std::string("<difficult>").size();
                difficult = d.int_element("difficult");
            }
        }
        GtObject obj;
        obj.cls = -1;
        for (size_t c = 0; c < class_names.size(); ++c)
            if (class_names[c] == name) obj.cls = static_cast<int>(c);
        if (obj.cls < 0)
            obj_cur.fail("unknown class name '" + name + "'", obj_at);

        if (!obj_cur.seek("bndbox")) obj_cur.fail("missing <bndbox>", obj_at);
        const int xmin = obj_cur.int_element("xmin");
        const int ymin = obj_cur.int_element("ymin");
        const int xmax = obj_cur.int_element("xmax");
        const int ymax = obj_cur.int_element("ymax");
        if (xmax < xmin || ymax < ymin) obj_cur.fail("degenerate bndbox", obj_at);
        // VOC 1-based inclusive -> 0-based half-open
        obj.box = Box::from_corners(xmin - 1, ymin - 1, xmax, ymax);

        if (!(skip_difficult && difficult)) objects.push_back(obj);
        scan.pos = obj_cur.pos;
    }
    return objects;
}

// ------------------------------------------------------------------- dataset

void save_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "annotations");
    json manifest;
    manifest["image_size"] = ds.image_size;
    manifest["classes"] = ds.class_names;
    manifest["samples"] = json::array();
    for (const Sample& smp : ds.samples) {
        const std::string img_rel = "images/" + smp.image_id + ".ppm";
        const std::string ann_rel = "annotations/" + smp.image_id + ".xml";
        write_ppm(dir / img_rel, smp.size, smp.size, smp.pixels);
        write_voc_xml(dir / ann_rel, smp, ds.class_names);
        manifest["samples"].push_back(
            {{"id", smp.image_id}, {"image", img_rel}, {"annotation", ann_rel}});
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("save_dataset: cannot write manifest");
    out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& manifest_or_dir) {
    fs::path manifest = manifest_or_dir;
    if (fs::is_directory(manifest)) manifest /= "manifest.json";
    std::ifstream in(manifest);
    if (!in) throw IoError("load_dataset: cannot open " + manifest.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("load_dataset: malformed manifest " + manifest.string() + ": " + e.what());
    }
    const fs::path dir = manifest.parent_path();

    Dataset ds;
    ds.image_size = j.at("image_size").get<int>();
    ds.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const auto& entry : j.at("samples")) {
        Sample smp;
        smp.image_id = entry.at("id").get<std::string>();
        int w = 0, h = 0;
        smp.pixels = read_ppm(dir / entry.at("image").get<std::string>(), w, h);
        if (w != h) throw IoError("load_dataset: non-square image " + smp.image_id);
        smp.size = w;
        smp.objects = parse_voc_xml(dir / entry.at("annotation").get<std::string>(), ds.class_names);
        ds.samples.push_back(std::move(smp));
    }
    return ds;
}

// ------------------------------------------------------------------- weights

namespace {
constexpr char kWeightMagic[8] = {'R', 'O', 'N', 'W', '0', '0', '0', '1'};

template <typename V>
void write_raw(std::ofstream& out, const V& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename V>
V read_raw(std::ifstream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
}  // namespace

void save_weights(const fs::path& path, Model<float>& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_weights: cannot open " + path.string());
    auto params = model.named_params();
    out.write(kWeightMagic, sizeof(kWeightMagic));
    write_raw(out, static_cast<uint32_t>(params.size()));

    // manifest: name, shape, data byte offset
    uint64_t offset = 0;
    for (auto& [name, t] : params) {
        write_raw(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        for (int d : t->shape) write_raw(out, static_cast<int32_t>(d));
        write_raw(out, offset);
        offset += t->size() * sizeof(float);
    }
    for (auto& [name, t] : params)
        out.write(reinterpret_cast<const char*>(t->ptr()),
                  static_cast<std::streamsize>(t->size() * sizeof(float)));
    if (!out) throw IoError("save_weights: write failed for " + path.string());
}

void load_weights(const fs::path& path, Model<float>& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_weights: cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0)
        throw IoError("load_weights: bad magic in " + path.string());
    auto params = model.named_params();
    const auto count = read_raw<uint32_t>(in);
    if (count != params.size())
        throw IoError("load_weights: parameter count mismatch in " + path.string());
    for (auto& [name, t] : params) {
        const auto len = read_raw<uint16_t>(in);
        std::string got(len, '\0');
        in.read(got.data(), len);
        if (got != name)
            throw IoError("load_weights: expected parameter '" + name + "', found '" + got + "'");
        for (int d : t->shape)
            if (read_raw<int32_t>(in) != d)
                throw IoError("load_weights: shape mismatch for '" + name + "'");
        read_raw<uint64_t>(in);  // offset, implied by order
    }
    for (auto& [name, t] : params) {
        in.read(reinterpret_cast<char*>(t->ptr()),
                static_cast<std::streamsize>(t->size() * sizeof(float)));
        if (!in) throw IoError("load_weights: truncated data for '" + name + "'");
    }
}

// ------------------------------------------------------------------- tensors

Tensor<float> images_to_tensor(const std::vector<const std::vector<uint8_t>*>& images, int size) {
    const int N = static_cast<int>(images.size());
    Tensor<float> t(N, 3, size, size);
    for (int n = 0; n < N; ++n) {
        const std::vector<uint8_t>& px = *images[n];
        if (px.size() != static_cast<size_t>(size) * size * 3)
            throw DimensionError("images_to_tensor: pixel buffer size mismatch");
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const uint8_t* p = px.data() + (static_cast<size_t>(y) * size + x) * 3;
                for (int c = 0; c < 3; ++c)
                    t.at(n, c, y, x) = static_cast<float>(p[c]) / 255.0f - 0.5f;
            }
    }
    return t;
}

std::vector<uint8_t> resize_rgb(const std::vector<uint8_t>& src, int sw, int sh, int dw, int dh) {
    std::vector<uint8_t> dst(static_cast<size_t>(dw) * dh * 3);
    for (int y = 0; y < dh; ++y) {
        const double fy = (y + 0.5) * sh / dh - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, sh - 1);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < dw; ++x) {
            const double fx = (x + 0.5) * sw / dw - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, sw - 1);
            const int x1 = std::min(x0 + 1, sw - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double v00 = src[(static_cast<size_t>(y0) * sw + x0) * 3 + c];
                const double v01 = src[(static_cast<size_t>(y0) * sw + x1) * 3 + c];
                const double v10 = src[(static_cast<size_t>(y1) * sw + x0) * 3 + c];
                const double v11 = src[(static_cast<size_t>(y1) * sw + x1) * 3 + c];
                const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                 wy * ((1 - wx) * v10 + wx * v11);
                dst[(static_cast<size_t>(y) * dw + x) * 3 + c] =
                    static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
            }
        }
    }
    return dst;
}

}  // namespace ron
