#pragma once

// Persistence: scene JSON, KITTI label text, KITTI velodyne binaries, results
// CSV and trained-model JSON. Readers either return a value or throw a
// structured error (SchemaError, ParseError, TruncatedFile).

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "impdet/errors.hpp"
#include "impdet/geometry.hpp"
#include "impdet/pipeline.hpp"
#include "impdet/scenegen.hpp"

namespace impdet {

inline constexpr int kSceneSchemaVersion = 1;
inline constexpr int kModelSchemaVersion = 1;

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Scene JSON

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw SchemaError(path.empty() ? "(root)" : path, "expected an object");
    auto it = obj.find(key);
    const std::string child = path.empty() ? key : path + "." + key;
    if (it == obj.end()) throw SchemaError(child, "missing field");
    return *it;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw SchemaError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw SchemaError(path, "expected a finite number");
    return v;
}

inline std::uint64_t as_unsigned(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        throw SchemaError(path, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline std::vector<double> as_numbers(const json& j, std::size_t n, const std::string& path) {
    if (!j.is_array() || j.size() != n)
        throw SchemaError(path, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline json point_json(const Point3& p) { return json::array({p.x, p.y, p.z}); }

inline Point3 point_from(const json& j, const std::string& path) {
    const auto v = as_numbers(j, 3, path);
    return {v[0], v[1], v[2]};
}

inline json dims_json(const Dims& d) { return json::array({d.l, d.w, d.h}); }

inline Dims dims_from(const json& j, const std::string& path) {
    const auto v = as_numbers(j, 3, path);
    return {v[0], v[1], v[2]};
}

inline json config_json(const SceneConfig& c) {
    const Range3& r = c.range;
    return json{{"range", json::array({r.x_min, r.x_max, r.y_min, r.y_max, r.z_min, r.z_max})},
                {"object_count", c.object_count},
                {"dims_mean", dims_json(c.dims_mean)},
                {"dims_std", dims_json(c.dims_std)},
                {"points_per_object_at_10m", c.points_per_object_at_10m},
                {"density_exponent", c.density_exponent},
                {"noise_sigma", c.noise_sigma},
                {"clutter_fraction", c.clutter_fraction},
                {"seed", c.seed},
                {"min_gap", c.min_gap},
                {"placement_attempts", c.placement_attempts}};
}

inline SceneConfig config_from(const json& j, const std::string& path) {
    SceneConfig c;
    const auto r = as_numbers(require(j, "range", path), 6, join(path, "range"));
    c.range = {r[0], r[1], r[2], r[3], r[4], r[5]};
    c.object_count = as_unsigned(require(j, "object_count", path), join(path, "object_count"));
    c.dims_mean = dims_from(require(j, "dims_mean", path), join(path, "dims_mean"));
    c.dims_std = dims_from(require(j, "dims_std", path), join(path, "dims_std"));
    c.points_per_object_at_10m =
        as_unsigned(require(j, "points_per_object_at_10m", path), join(path, "points_per_object_at_10m"));
    c.density_exponent = as_number(require(j, "density_exponent", path), join(path, "density_exponent"));
    c.noise_sigma = as_number(require(j, "noise_sigma", path), join(path, "noise_sigma"));
    c.clutter_fraction = as_number(require(j, "clutter_fraction", path), join(path, "clutter_fraction"));
    c.seed = as_unsigned(require(j, "seed", path), join(path, "seed"));
    c.min_gap = as_number(require(j, "min_gap", path), join(path, "min_gap"));
    c.placement_attempts = as_unsigned(require(j, "placement_attempts", path), join(path, "placement_attempts"));
    return c;
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& s) {
    using nlohmann::json;
    if (s.labels.size() != s.boxes.size()) throw InvalidArgument("one label per box required");
    if (s.cloud.intensity.size() != s.cloud.points.size()) throw InvalidArgument("one intensity per point required");
    json boxes = json::array();
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
        const OrientedBox3& b = s.boxes[i];
        boxes.push_back(json{{"center", detail::point_json(b.center)},
                             {"dims", detail::dims_json(b.dims)},
                             {"yaw", b.yaw},
                             {"label", s.labels[i]}});
    }
    json points = json::array();
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
        const Point3& p = s.cloud.points[i];
        points.push_back(json::array({p.x, p.y, p.z, s.cloud.intensity[i]}));
    }
    return json{{"version", kSceneSchemaVersion},
                {"config", detail::config_json(s.config)},
                {"boxes", std::move(boxes)},
                {"points", std::move(points)}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
    using namespace detail;
    Scene s;
    const json& version = require(j, "version", "");
    if (!version.is_number_integer() || version.get<std::int64_t>() != kSceneSchemaVersion)
        throw SchemaError("version", "unsupported scene schema version");
    s.config = config_from(require(j, "config", ""), "config");
    const json& boxes = require(j, "boxes", "");
    if (!boxes.is_array()) throw SchemaError("boxes", "expected an array");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const std::string p = "boxes[" + std::to_string(i) + "]";
        OrientedBox3 b;
        b.center = point_from(require(boxes[i], "center", p), p + ".center");
        b.dims = dims_from(require(boxes[i], "dims", p), p + ".dims");
        b.yaw = as_number(require(boxes[i], "yaw", p), p + ".yaw");
        const json& label = require(boxes[i], "label", p);
        if (!label.is_string()) throw SchemaError(p + ".label", "expected a string");
        s.boxes.push_back(b);
        s.labels.push_back(label.get<std::string>());
    }
    const json& points = require(j, "points", "");
    if (!points.is_array()) throw SchemaError("points", "expected an array");
    s.cloud.points.reserve(points.size());
    s.cloud.intensity.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto v = as_numbers(points[i], 4, "points[" + std::to_string(i) + "]");
        s.cloud.push_back({v[0], v[1], v[2]}, v[3]);
    }
    return s;
}

inline std::string write_scene_json(const Scene& s, int indent = -1) { return scene_to_json(s).dump(indent); }

inline Scene read_scene_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("(root)", std::string("malformed JSON: ") + e.what());
    }
    return scene_from_json(j);
}

// ---------------------------------------------------------------------------
// KITTI labels

struct KittiLabel {
    std::string type;
    double truncated = 0.0;
    int occluded = 0;
    double alpha = 0.0;
    std::array<double, 4> bbox2d{};    // left top right bottom (pixels)
    std::array<double, 3> dims_hwl{};  // metres
    std::array<double, 3> location{};  // camera frame, metres
    double rotation_y = 0.0;
    bool dont_care = false;

    friend bool operator==(const KittiLabel&, const KittiLabel&) = default;
};

inline constexpr std::size_t kKittiFields = 15;

namespace detail {

struct Token {
    std::string_view text;
    std::size_t column;  // 1-based
};

inline std::vector<Token> tokenize(std::string_view line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i >= line.size()) break;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        out.push_back({line.substr(start, i - start), start + 1});
    }
    return out;
}

inline double parse_real(const Token& t, std::size_t line, const char* field) {
    double v = 0.0;
    const char* end = t.text.data() + t.text.size();
    const auto res = std::from_chars(t.text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
        throw ParseError(line, t.column, std::string("field '") + field + "' is not a finite number");
    return v;
}

inline int parse_int(const Token& t, std::size_t line, const char* field) {
    int v = 0;
    const char* end = t.text.data() + t.text.size();
    const auto res = std::from_chars(t.text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw ParseError(line, t.column, std::string("field '") + field + "' is not an integer");
    return v;
}

}  // namespace detail

// One object per non-blank line, 15 whitespace-separated fields. Line and
// column numbers in errors are 1-based.
inline std::vector<KittiLabel> parse_kitti_labels(std::string_view text) {
    std::vector<KittiLabel> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const auto tok = detail::tokenize(line);
        if (tok.empty()) continue;
        if (tok.size() != kKittiFields) {
            const std::size_t col = tok.size() > kKittiFields ? tok[kKittiFields].column : line.size() + 1;
            throw ParseError(line_no, col,
                             "expected 15 fields, found " + std::to_string(tok.size()));
        }
        KittiLabel l;
        l.type = std::string(tok[0].text);
        l.dont_care = l.type == "DontCare";
        l.truncated = detail::parse_real(tok[1], line_no, "truncated");
        l.occluded = detail::parse_int(tok[2], line_no, "occluded");
        l.alpha = detail::parse_real(tok[3], line_no, "alpha");
        static constexpr const char* bbox_names[] = {"bbox_left", "bbox_top", "bbox_right", "bbox_bottom"};
        for (std::size_t i = 0; i < 4; ++i) l.bbox2d[i] = detail::parse_real(tok[4 + i], line_no, bbox_names[i]);
        static constexpr const char* dim_names[] = {"height", "width", "length"};
        for (std::size_t i = 0; i < 3; ++i) l.dims_hwl[i] = detail::parse_real(tok[8 + i], line_no, dim_names[i]);
        static constexpr const char* loc_names[] = {"x", "y", "z"};
        for (std::size_t i = 0; i < 3; ++i) l.location[i] = detail::parse_real(tok[11 + i], line_no, loc_names[i]);
        l.rotation_y = detail::parse_real(tok[14], line_no, "rotation_y");
        out.push_back(std::move(l));
    }
    return out;
}

// Single-space separated, shortest round-trip numbers, one line per label.
inline std::string write_kitti_labels(std::span<const KittiLabel> labels) {
    std::string out;
    for (const KittiLabel& l : labels) {
        if (l.type.empty() || l.type.find_first_of(" \t\r\n") != std::string::npos)
            throw InvalidArgument("KITTI type must be a single non-empty token");
        out += l.type;
        auto put = [&](double v) {
            out += ' ';
            out += format_double(v);
        };
        put(l.truncated);
        out += ' ';
        out += std::to_string(l.occluded);
        put(l.alpha);
        for (double v : l.bbox2d) put(v);
        for (double v : l.dims_hwl) put(v);
        for (double v : l.location) put(v);
        put(l.rotation_y);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Velodyne binary: packed little-endian float32 x, y, z, intensity.

namespace detail {

inline float load_f32_le(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

inline void store_f32_le(float f, std::string& out) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((u >> s) & 0xffu));
}

}  // namespace detail

inline PointCloud read_pointcloud_bin(std::string_view bytes) {
    if (bytes.size() % 16 != 0) throw TruncatedFile(bytes.size());
    PointCloud cloud;
    const std::size_t n = bytes.size() / 16;
    cloud.points.reserve(n);
    cloud.intensity.reserve(n);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < n; ++i, p += 16) {
        cloud.push_back({detail::load_f32_le(p), detail::load_f32_le(p + 4), detail::load_f32_le(p + 8)},
                        detail::load_f32_le(p + 12));
    }
    return cloud;
}

// Values are narrowed to float32; clouds read from a .bin file re-encode to
// identical bytes.
inline std::string write_pointcloud_bin(const PointCloud& cloud) {
    if (cloud.intensity.size() != cloud.points.size()) throw InvalidArgument("one intensity per point required");
    std::string out;
    out.reserve(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point3& q = cloud.points[i];
        for (double v : {q.x, q.y, q.z, cloud.intensity[i]}) detail::store_f32_le(static_cast<float>(v), out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV (header row, comma separated, no quoting needed for our fields)

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        if (row.size() != header.size()) throw InvalidArgument("CSV row width differs from header");
        rows.push_back(std::move(row));
    }
    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InvalidArgument("CSV has no column '" + name + "'");
    }
};

inline std::string write_csv(const CsvTable& t) {
    auto line = [](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].find_first_of(",\n\"") != std::string::npos)
                throw InvalidArgument("CSV cell contains a separator: " + cells[i]);
            if (i) s += ',';
            s += cells[i];
        }
        return s + '\n';
    };
    std::string out = line(t.header);
    for (const auto& r : t.rows) out += line(r);
    return out;
}

inline CsvTable read_csv(std::string_view text) {
    CsvTable t;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t s = 0;
        while (true) {
            const std::size_t c = line.find(',', s);
            cells.emplace_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
            if (c == std::string_view::npos) break;
            s = c + 1;
        }
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size())
                throw ParseError(line_no, 1, "expected " + std::to_string(t.header.size()) + " cells");
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

inline double csv_number(const std::string& cell) {
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw InvalidArgument("CSV cell '" + cell + "' is not a number");
    return v;
}

// ---------------------------------------------------------------------------
// Trained model JSON

inline nlohmann::json model_to_json(const Model& m) {
    using nlohmann::json;
    return json{{"version", kModelSchemaVersion},
                {"feature_width", m.generator.feature_width()},
                {"shifter", m.shifter.mlp().params()},
                {"centerness", m.centerness.mlp().params()},
                {"generator", m.generator.params()},
                {"refine", m.refine.params()}};
}

inline Model model_from_json(const nlohmann::json& j) {
    using namespace detail;
    const json& version = require(j, "version", "");
    if (!version.is_number_integer() || version.get<std::int64_t>() != kModelSchemaVersion)
        throw SchemaError("version", "unsupported model schema version");
    if (as_unsigned(require(j, "feature_width", ""), "feature_width") != kFeatureWidth)
        throw SchemaError("feature_width", "only width " + std::to_string(kFeatureWidth) + " is supported");
    Model m;
    auto load = [&](const char* key, std::vector<double>& dst) {
        const json& a = require(j, key, "");
        if (!a.is_array() || a.size() != dst.size())
            throw SchemaError(key, "expected " + std::to_string(dst.size()) + " parameters");
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = as_number(a[i], std::string(key) + "[" + std::to_string(i) + "]");
    };
    load("shifter", m.shifter.mlp().params());
    load("centerness", m.centerness.mlp().params());
    load("generator", m.generator.params());
    load("refine", m.refine.params());
    return m;
}

inline std::string write_model_json(const Model& m) { return model_to_json(m).dump(); }

inline Model read_model_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("(root)", std::string("malformed JSON: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace impdet
