#pragma once

// Run configuration shared by the command-line tool: one `key = value` per
// line ('#' starts a comment), flag overrides applied on top, validated as a
// whole before any work starts.

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "impdet/errors.hpp"
#include "impdet/io.hpp"
#include "impdet/pipeline.hpp"
#include "impdet/scenegen.hpp"
#include "impdet/train.hpp"

namespace impdet {

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t scenes = 10;
    SceneConfig scene;
    PipelineConfig pipeline;
    TrainConfig train;
    std::size_t trials = 100;
    std::string ap_mode = "R40";
    double eval_iou = 0.7;
    std::string input;
    std::string output;

    void validate() const {
        try {
            scene.validate();
            pipeline.validate();
            train.weights.validate();
            if (scenes < 1) throw InvalidArgument("scenes must be >= 1");
            if (trials < 1) throw InvalidArgument("trials must be >= 1");
            if (!(train.lr > 0.0)) throw InvalidArgument("lr must be positive");
            if (train.batch < 1) throw InvalidArgument("batch must be >= 1");
            if (!(eval_iou > 0.0 && eval_iou <= 1.0)) throw InvalidArgument("eval_iou must lie in (0, 1]");
            parse_ap_mode(ap_mode);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }
};

namespace detail {

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean '" + v + "' for key '" + key + "'");
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define IMPDET_NUM(NAME, TYPE, EXPR)                                                                  \
    {                                                                                                 \
        NAME, Field {                                                                                 \
            [](const RunConfig& c) {                                                                  \
                if constexpr (std::is_floating_point_v<TYPE>) return format_double(c.EXPR);           \
                else return std::to_string(c.EXPR);                                                   \
            },                                                                                        \
                [](RunConfig& c, const std::string& v) { c.EXPR = parse_value<TYPE>(NAME, v); }       \
        }                                                                                             \
    }
#define IMPDET_BOOL(NAME, EXPR)                                                                       \
    {                                                                                                 \
        NAME, Field {                                                                                 \
            [](const RunConfig& c) { return std::string(c.EXPR ? "true" : "false"); },                \
                [](RunConfig& c, const std::string& v) { c.EXPR = parse_bool(NAME, v); }              \
        }                                                                                             \
    }
#define IMPDET_STR(NAME, EXPR)                                                                        \
    {                                                                                                 \
        NAME, Field {                                                                                 \
            [](const RunConfig& c) { return c.EXPR; }, [](RunConfig& c, const std::string& v) { c.EXPR = v; } \
        }                                                                                             \
    }

inline const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = {
        IMPDET_NUM("seed", std::uint64_t, seed),
        IMPDET_NUM("scenes", std::size_t, scenes),
        IMPDET_NUM("trials", std::size_t, trials),
        IMPDET_STR("ap_mode", ap_mode),
        IMPDET_NUM("eval_iou", double, eval_iou),
        IMPDET_STR("input", input),
        IMPDET_STR("output", output),
        // scene generation
        IMPDET_NUM("scene.objects", std::size_t, scene.object_count),
        IMPDET_NUM("scene.points_per_object_at_10m", std::size_t, scene.points_per_object_at_10m),
        IMPDET_NUM("scene.density_exponent", double, scene.density_exponent),
        IMPDET_NUM("scene.noise_sigma", double, scene.noise_sigma),
        IMPDET_NUM("scene.clutter_fraction", double, scene.clutter_fraction),
        IMPDET_NUM("scene.min_gap", double, scene.min_gap),
        IMPDET_NUM("scene.length_mean", double, scene.dims_mean.l),
        IMPDET_NUM("scene.width_mean", double, scene.dims_mean.w),
        IMPDET_NUM("scene.height_mean", double, scene.dims_mean.h),
        IMPDET_NUM("scene.length_std", double, scene.dims_std.l),
        IMPDET_NUM("scene.width_std", double, scene.dims_std.w),
        IMPDET_NUM("scene.height_std", double, scene.dims_std.h),
        // candidates and sampling
        IMPDET_NUM("seed_cell", double, pipeline.seed_cell),
        IMPDET_NUM("top_k", std::size_t, pipeline.top_k),
        IMPDET_NUM("radius", double, pipeline.sample.radius),
        IMPDET_NUM("m", std::size_t, pipeline.sample.m),
        IMPDET_NUM("grid", std::size_t, pipeline.sample.grid),
        IMPDET_NUM("interval_x", double, pipeline.sample.interval.x),
        IMPDET_NUM("interval_y", double, pipeline.sample.interval.y),
        IMPDET_NUM("interval_z", double, pipeline.sample.interval.z),
        IMPDET_NUM("knn", std::size_t, pipeline.sample.knn),
        IMPDET_BOOL("virtual", pipeline.sample.use_virtual),
        // boundary
        IMPDET_NUM("h", std::size_t, pipeline.boundary.h),
        IMPDET_NUM("threshold", double, pipeline.boundary.threshold),
        {"strategy", Field{[](const RunConfig& c) { return to_string(c.pipeline.boundary.strategy); },
                           [](RunConfig& c, const std::string& v) {
                               try {
                                   c.pipeline.boundary.strategy = parse_strategy(v);
                               } catch (const InvalidArgument& e) {
                                   throw ConfigError(e.what());
                               }
                           }}},
        IMPDET_BOOL("score_raw_only", pipeline.boundary.score_raw_only),
        // detection
        IMPDET_NUM("conf_t", double, pipeline.conf_t),
        IMPDET_NUM("nms_iou", double, pipeline.nms_iou),
        IMPDET_BOOL("nms_3d", pipeline.nms_3d),
        IMPDET_BOOL("refine", pipeline.refine),
        // training
        IMPDET_NUM("epochs", std::size_t, train.epochs),
        IMPDET_NUM("lr", double, train.lr),
        IMPDET_NUM("batch", std::size_t, train.batch),
        IMPDET_NUM("lambda1", double, train.weights.offset),
        IMPDET_NUM("lambda2", double, train.weights.centerness),
        IMPDET_NUM("lambda3", double, train.weights.implicit),
        IMPDET_NUM("lambda4", double, train.weights.cls),
        IMPDET_NUM("lambda5", double, train.weights.box),
        IMPDET_NUM("lambda6", double, train.weights.direction),
    };
    return f;
}

#undef IMPDET_NUM
#undef IMPDET_BOOL
#undef IMPDET_STR

}  // namespace detail

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    const auto& f = detail::fields();
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, value);
}

// "key=value" (as given on the command line).
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set_config_value(c, detail::trim(std::string_view(assignment).substr(0, eq)),
                     detail::trim(std::string_view(assignment).substr(eq + 1)));
}

inline void apply_config_text(RunConfig& c, std::string_view text) {
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        try {
            apply_override(c, t);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

// Effective configuration, one sorted key = value line each.
inline std::string dump_config(const RunConfig& c) {
    std::string out;
    for (const auto& [key, field] : detail::fields()) out += key + " = " + field.get(c) + "\n";
    return out;
}

}  // namespace impdet
