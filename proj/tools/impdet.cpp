// impdet command-line tool: gen, fit, train, eval, robustness, ablate-h, report.
//
// Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 configuration error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "impdet/config.hpp"
#include "impdet/eval.hpp"
#include "impdet/io.hpp"
#include "impdet/pipeline.hpp"
#include "impdet/scenegen.hpp"
#include "impdet/train.hpp"
#include "svg_plot.hpp"

#ifndef IMPDET_GIT_DESCRIBE
#define IMPDET_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace impdet;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::size_t jobs = 1;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", c.sets, "override one config key (key=value), repeatable");
    app->add_option("--seed", c.seed, "base seed");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--jobs", c.jobs, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
}

// Defaults < config file < --set < dedicated flags (applied by the caller).
RunConfig base_config(const Common& c) {
    RunConfig cfg;
    if (!c.config_file.empty()) apply_config_text(cfg, read_text_file(c.config_file));
    for (const auto& s : c.sets) apply_override(cfg, s);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

fs::path output_dir(const Common& c, const RunConfig& cfg, const std::string& command) {
    fs::path dir;
    if (!c.out.empty()) dir = c.out;
    else if (!cfg.output.empty()) dir = cfg.output;
    else {
        const char* root = std::getenv("IMPDET_OUTPUT_ROOT");
        dir = fs::path(root && *root ? root : "impdet_out") / command;
    }
    fs::create_directories(dir);
    return dir;
}

// Validates, logs and echoes the effective config into the output directory.
// The output path itself is left out so that reruns into another directory
// produce identical files.
fs::path start_run(const Common& c, RunConfig& cfg, const std::string& command) {
    cfg.validate();
    const fs::path dir = output_dir(c, cfg, command);
    RunConfig echo = cfg;
    echo.output.clear();
    const std::string text = "# impdet " + command + "\n# git_describe = " IMPDET_GIT_DESCRIBE "\n" + dump_config(echo);
    write_text_file((dir / "config.txt").string(), text);
    std::cerr << "resolved config (" << command << "):\n" << text;
    return dir;
}

std::string scene_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04zu.json", i);
    return buf;
}

std::vector<Scene> load_scene_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw Error("input directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("scene_") && name.ends_with(".json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyInput("no scene_*.json files in '" + dir + "'");
    std::vector<Scene> scenes;
    for (const auto& f : files) {
        try {
            scenes.push_back(read_scene_json(read_text_file(f.string())));
        } catch (const SchemaError& e) {
            throw SchemaError(f.filename().string() + ":" + e.path(), e.what());
        }
    }
    return scenes;
}

// Scenes from cfg.input when set, otherwise generated from cfg.scene.
std::vector<Scene> scenes_for(const RunConfig& cfg) {
    if (!cfg.input.empty()) return load_scene_dir(cfg.input);
    return generate_scenes(cfg.scene, cfg.scenes, cfg.seed);
}

std::string fmt(double v) { return format_double(v); }

void write_out(const fs::path& dir, const std::string& name, const std::string& text) {
    write_text_file((dir / name).string(), text);
    std::cout << "wrote " << (dir / name).string() << "\n";
}

// --- gen -------------------------------------------------------------------

int cmd_gen(const Common& c, std::optional<std::size_t> n) {
    RunConfig cfg = base_config(c);
    if (n) cfg.scenes = *n;
    const fs::path dir = start_run(c, cfg, "gen");
    const auto scenes = generate_scenes(cfg.scene, cfg.scenes, cfg.seed);
    for (std::size_t i = 0; i < scenes.size(); ++i)
        write_text_file((dir / scene_file_name(i)).string(), write_scene_json(scenes[i]));
    std::cout << "generated " << scenes.size() << " scenes in " << dir.string() << "\n";
    return 0;
}

// --- fit -------------------------------------------------------------------

struct FitFlags {
    std::string input, strategy, model;
    std::optional<std::size_t> h, scenes;
};

int cmd_fit(const Common& c, const FitFlags& f) {
    RunConfig cfg = base_config(c);
    if (!f.input.empty()) cfg.input = f.input;
    if (!f.strategy.empty()) set_config_value(cfg, "strategy", f.strategy);
    if (f.h) cfg.pipeline.boundary.h = *f.h;
    if (f.scenes) cfg.scenes = *f.scenes;
    const fs::path dir = start_run(c, cfg, "fit");
    const auto scenes = scenes_for(cfg);
    std::optional<Model> model;
    if (!f.model.empty()) model = read_model_json(read_text_file(f.model));

    const auto results = parallel_map(scenes.size(), c.jobs, [&](std::size_t i) {
        return run_pipeline(scenes[i], cfg.pipeline, model ? &*model : nullptr, pipeline_seed(cfg.seed, i));
    });
    CsvTable t;
    t.header = {"scene", "rank", "x", "y", "z", "l", "w", "h", "yaw", "confidence", "angle_index", "fit_score",
                "nms_kept"};
    std::size_t n_props = 0, n_dets = 0;
    for (std::size_t si = 0; si < results.size(); ++si) {
        const auto& r = results[si];
        std::vector<bool> kept(r.proposals.size(), false);
        for (std::size_t k : r.kept) kept[k] = true;
        for (std::size_t k = 0; k < r.proposals.size(); ++k) {
            const OrientedBox3& b = r.proposals[k].box;
            t.add({std::to_string(si), std::to_string(k), fmt(b.center.x), fmt(b.center.y), fmt(b.center.z),
                   fmt(b.dims.l), fmt(b.dims.w), fmt(b.dims.h), fmt(b.yaw), fmt(r.proposals[k].confidence),
                   std::to_string(r.fits[k].angle_index), fmt(r.fits[k].score), kept[k] ? "1" : "0"});
        }
        n_props += r.proposals.size();
        n_dets += r.detections.size();
    }
    write_out(dir, "detections.csv", write_csv(t));
    std::cout << "fit: " << scenes.size() << " scenes, " << n_props << " proposals, " << n_dets
              << " detections after NMS (" << (model ? "learned" : "oracle") << " mode)\n";
    return 0;
}

// --- eval ------------------------------------------------------------------

struct Loaded {
    std::vector<std::vector<Detection>> proposals;  // rank order
    std::vector<std::vector<Detection>> detections; // nms_kept rows
};

Loaded load_detections(const std::string& path, std::size_t n_scenes) {
    const CsvTable t = read_csv(read_text_file(path));
    const std::size_t cs = t.column("scene"), cr = t.column("rank"), cx = t.column("x"), cy = t.column("y"),
                      cz = t.column("z"), cl = t.column("l"), cw = t.column("w"), ch = t.column("h"),
                      cyaw = t.column("yaw"), cc = t.column("confidence"), ck = t.column("nms_kept");
    struct Row {
        std::size_t rank;
        Detection d;
        bool kept;
    };
    std::vector<std::vector<Row>> rows(n_scenes);
    for (const auto& r : t.rows) {
        const double s = csv_number(r[cs]);
        if (!(s >= 0.0) || s != std::floor(s) || s >= static_cast<double>(n_scenes))
            throw InvalidArgument("detections reference scene " + r[cs] + " but only " + std::to_string(n_scenes) +
                                  " scenes were given");
        Detection d;
        d.box = make_box({csv_number(r[cx]), csv_number(r[cy]), csv_number(r[cz])},
                         {csv_number(r[cl]), csv_number(r[cw]), csv_number(r[ch])}, csv_number(r[cyaw]));
        d.confidence = csv_number(r[cc]);
        rows[static_cast<std::size_t>(s)].push_back({static_cast<std::size_t>(csv_number(r[cr])), d, r[ck] == "1"});
    }
    Loaded out;
    for (auto& v : rows) {
        std::stable_sort(v.begin(), v.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
        out.proposals.emplace_back();
        out.detections.emplace_back();
        for (const Row& r : v) {
            out.proposals.back().push_back(r.d);
            if (r.kept) out.detections.back().push_back(r.d);
        }
    }
    return out;
}

int cmd_eval(const Common& c, const std::string& input, const std::string& dets_path) {
    RunConfig cfg = base_config(c);
    if (!input.empty()) cfg.input = input;
    const fs::path dir = start_run(c, cfg, "eval");
    const auto scenes = scenes_for(cfg);
    const Loaded L = load_detections(dets_path, scenes.size());
    const ApMode mode = parse_ap_mode(cfg.ap_mode);

    std::size_t hits = 0, n_gt = 0;
    std::vector<SceneDetections> sd;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        hits += recall_hits(L.proposals[i], scenes[i].boxes, cfg.eval_iou, 100);
        n_gt += scenes[i].boxes.size();
        sd.push_back({L.detections[i], scenes[i].boxes});
    }
    const double recall = n_gt ? static_cast<double>(hits) / static_cast<double>(n_gt) : 0.0;
    const PrCurve pr = average_precision(sd, cfg.eval_iou, mode);

    CsvTable metrics;
    metrics.header = {"metric", "value"};
    const std::string iou = fmt(cfg.eval_iou);
    metrics.add({"recall@" + iou + "_top100", fmt(recall)});
    metrics.add({"AP_" + to_string(mode) + "@" + iou, fmt(pr.ap)});
    std::cout << "recall@" << iou << " (top-100 proposals) = " << fmt(recall) << "\n";
    std::cout << "AP " << to_string(mode) << " @" << iou << " = " << fmt(pr.ap) << "\n";
    for (const auto& band : default_bands()) {
        const double ap = average_precision(restrict_to_band(sd, band), cfg.eval_iou, mode).ap;
        metrics.add({"AP_" + to_string(mode) + "@" + iou + "_" + band.name, fmt(ap)});
        std::cout << "AP " << to_string(mode) << " @" << iou << " [" << band.name << "] = " << fmt(ap) << "\n";
    }
    write_out(dir, "eval.csv", write_csv(metrics));

    CsvTable curve;
    curve.header = {"recall", "precision"};
    for (const PrPoint& p : pr.points) curve.add({fmt(p.recall), fmt(p.precision)});
    write_out(dir, "pr_curve.csv", write_csv(curve));
    return 0;
}

// --- train -----------------------------------------------------------------

struct TrainFlags {
    std::string input;
    std::optional<std::size_t> epochs, scenes;
    std::optional<double> lr;
};

int cmd_train(const Common& c, const TrainFlags& f) {
    RunConfig cfg = base_config(c);
    if (!f.input.empty()) cfg.input = f.input;
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.lr) cfg.train.lr = *f.lr;
    if (f.scenes) cfg.scenes = *f.scenes;
    const fs::path dir = start_run(c, cfg, "train");
    const auto scenes = scenes_for(cfg);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    tc.data.sample = cfg.pipeline.sample;
    tc.data.seed_cell = cfg.pipeline.seed_cell;
    tc.boundary = cfg.pipeline.boundary;
    const TrainAllResult r = train_all(scenes, tc);

    CsvTable t;
    t.header = {"epoch", "offset", "centerness", "implicit", "cls", "box", "direction", "total"};
    for (const auto& row : r.curve) {
        const LossBreakdown& b = row.terms;
        t.add({std::to_string(row.epoch), fmt(b.offset), fmt(b.centerness), fmt(b.implicit), fmt(b.cls), fmt(b.box),
               fmt(b.direction), fmt(b.total)});
    }
    write_out(dir, "loss_curve.csv", write_csv(t));
    write_out(dir, "model.json", write_model_json(r.model));
    std::cout << "total loss " << fmt(r.curve.front().terms.total) << " -> " << fmt(r.curve.back().terms.total)
              << " over " << tc.epochs << " epochs\n";
    return 0;
}

// --- robustness ------------------------------------------------------------

void add_summary(CsvTable& t, const std::string& rep, const std::string& setting, const Summary& s) {
    t.add({rep, setting, std::to_string(s.count), fmt(s.mean), fmt(s.min), fmt(s.q10), fmt(s.q25), fmt(s.median),
           fmt(s.q75), fmt(s.q90), fmt(s.max), fmt(s.frac_below_07)});
    std::cout << rep << " [" << setting << "]: mean IoU " << fmt(s.mean) << ", median " << fmt(s.median)
              << ", below 0.7: " << fmt(s.frac_below_07) << "\n";
}

int cmd_robustness(const Common& c, const std::string& input, std::optional<std::size_t> trials,
                   std::optional<std::size_t> n) {
    RunConfig cfg = base_config(c);
    if (!input.empty()) cfg.input = input;
    if (trials) cfg.trials = *trials;
    if (n) cfg.scenes = *n;
    const fs::path dir = start_run(c, cfg, "robustness");
    const auto scenes = scenes_for(cfg);
    const Point3 shifts{0.1, 0.2, 0.3};

    CsvTable t;
    t.header = {"representation", "setting", "count", "mean", "min", "q10", "q25", "median", "q75", "q90", "max",
                "frac_below_0.7"};
    add_summary(t, "parametric", "random_shift_0.1_0.2_0.3",
                robustness_parametric(scenes, shifts, cfg.trials, cfg.seed));
    std::vector<double> corner;
    for (const Scene& s : scenes)
        for (const OrientedBox3& b : s.boxes) {
            OrientedBox3 moved = b;
            moved.center = moved.center + shifts;
            corner.push_back(iou_3d(b, moved));
        }
    add_summary(t, "parametric", "corner_shift_0.1_0.2_0.3", summarize(corner));
    const std::vector<double> fractions{0.0, 0.07, 0.19, 0.40};
    const auto masked =
        robustness_implicit(scenes, fractions, cfg.pipeline.boundary, cfg.pipeline.sample, cfg.seed, c.jobs);
    for (std::size_t k = 0; k < fractions.size(); ++k)
        add_summary(t, "implicit", "mask_" + fmt(fractions[k]), masked[k]);
    write_out(dir, "robustness.csv", write_csv(t));
    return 0;
}

// --- ablate-h --------------------------------------------------------------

int cmd_ablate(const Common& c, const std::string& input, std::vector<std::size_t> hs, std::optional<std::size_t> n) {
    RunConfig cfg = base_config(c);
    if (!input.empty()) cfg.input = input;
    if (n) cfg.scenes = *n;
    if (hs.empty()) hs = {1, 3, 5, 7, 9};
    const fs::path dir = start_run(c, cfg, "ablate-h");
    const auto scenes = scenes_for(cfg);
    const auto rows = run_ablation_h(scenes, hs, cfg.pipeline, cfg.seed, c.jobs);
    CsvTable t;
    t.header = {"h", "mean_iou", "recall_0.7"};
    for (const auto& r : rows) {
        t.add({std::to_string(r.h), fmt(r.mean_iou), fmt(r.recall_07)});
        std::cout << "h=" << r.h << ": mean IoU " << fmt(r.mean_iou) << ", recall@0.7 " << fmt(r.recall_07) << "\n";
    }
    write_out(dir, "ablation_h.csv", write_csv(t));
    return 0;
}

// --- report ----------------------------------------------------------------

std::vector<double> column(const CsvTable& t, const std::string& name) {
    const std::size_t k = t.column(name);
    std::vector<double> v;
    for (const auto& r : t.rows) v.push_back(csv_number(r[k]));
    return v;
}

int cmd_report(const Common& c, const std::string& input) {
    RunConfig cfg = base_config(c);
    if (!input.empty()) cfg.input = input;
    if (cfg.input.empty()) throw InvalidArgument("report needs --in DIR holding result CSVs");
    const fs::path in = cfg.input;
    const fs::path dir = c.out.empty() && cfg.output.empty() ? in : output_dir(c, cfg, "report");
    std::size_t made = 0;
    auto load = [&](const char* name) -> std::optional<CsvTable> {
        if (!fs::exists(in / name)) return std::nullopt;
        return read_csv(read_text_file((in / name).string()));
    };
    if (auto t = load("pr_curve.csv")) {
        write_out(dir, "pr_curve.svg",
                  svg::line_chart("Precision-recall", "recall", "precision",
                                  {{"PR", column(*t, "recall"), column(*t, "precision")}}));
        ++made;
    }
    if (auto t = load("loss_curve.csv")) {
        const auto epoch = column(*t, "epoch");
        std::vector<svg::Series> s;
        for (const char* k : {"total", "offset", "centerness", "implicit", "cls", "box", "direction"})
            s.push_back({k, epoch, column(*t, k)});
        write_out(dir, "loss_curve.svg", svg::line_chart("Training loss", "epoch", "loss", s));
        ++made;
    }
    if (auto t = load("ablation_h.csv")) {
        const auto h = column(*t, "h");
        write_out(dir, "ablation_h.svg",
                  svg::line_chart("Angle count sweep", "h", "value",
                                  {{"mean IoU", h, column(*t, "mean_iou")}, {"recall@0.7", h, column(*t, "recall_0.7")}}));
        ++made;
    }
    if (auto t = load("robustness.csv")) {
        const std::size_t rep = t->column("representation"), set = t->column("setting");
        const auto mean = column(*t, "mean"), q10 = column(*t, "q10"), q90 = column(*t, "q90");
        std::vector<svg::Bar> bars;
        for (std::size_t i = 0; i < t->rows.size(); ++i)
            bars.push_back({t->rows[i][rep] + " " + t->rows[i][set], mean[i], q10[i], q90[i]});
        write_out(dir, "robustness.svg", svg::bar_chart("IoU under perturbation (mean, q10-q90)", "IoU", bars));
        ++made;
    }
    if (made == 0) throw EmptyInput("no known result CSVs in '" + in.string() + "'");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"impdet: implicit-field box fitting on synthetic LiDAR scenes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("impdet ") + IMPDET_GIT_DESCRIBE);

    Common common;
    std::optional<std::size_t> n_scenes, trials, h, epochs;
    std::optional<double> lr;
    std::string input, strategy, model, dets;
    std::vector<std::size_t> h_values;

    auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
    add_common(gen, common);
    gen->add_option("--scenes", n_scenes, "number of scenes");

    auto* fit = app.add_subcommand("fit", "run candidate generation and boundary fitting");
    add_common(fit, common);
    fit->add_option("--in", input, "directory of scene_*.json (generated when omitted)");
    fit->add_option("--scenes", n_scenes, "number of generated scenes");
    fit->add_option("--strategy", strategy, "sampling | centrosymmetry");
    fit->add_option("--angles", h, "number of enumerated angles (h)");
    fit->add_option("--model", model, "trained model.json (oracle values when omitted)")->check(CLI::ExistingFile);

    auto* train = app.add_subcommand("train", "train shifter, centerness head, classifier and refine head");
    add_common(train, common);
    train->add_option("--in", input, "directory of scene_*.json (generated when omitted)");
    train->add_option("--scenes", n_scenes, "number of generated scenes");
    train->add_option("--epochs", epochs, "epochs");
    train->add_option("--lr", lr, "learning rate");

    auto* eval = app.add_subcommand("eval", "recall and AP of fitted detections");
    add_common(eval, common);
    eval->add_option("--in", input, "directory of scene_*.json")->required();
    eval->add_option("--detections", dets, "detections.csv written by fit")->required()->check(CLI::ExistingFile);

    auto* rob = app.add_subcommand("robustness", "centre shifts vs masked implicit assignments");
    add_common(rob, common);
    rob->add_option("--in", input, "directory of scene_*.json (generated when omitted)");
    rob->add_option("--scenes", n_scenes, "number of generated scenes");
    rob->add_option("--trials", trials, "random shifts per box");

    auto* abl = app.add_subcommand("ablate-h", "sweep the number of enumerated angles");
    add_common(abl, common);
    abl->add_option("--in", input, "directory of scene_*.json (generated when omitted)");
    abl->add_option("--scenes", n_scenes, "number of generated scenes");
    abl->add_option("--h-values", h_values, "angle counts to evaluate")->delimiter(',');

    auto* rep = app.add_subcommand("report", "render result CSVs as SVG charts");
    add_common(rep, common);
    rep->add_option("--in", input, "directory holding result CSVs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen) return cmd_gen(common, n_scenes);
        if (*fit) return cmd_fit(common, {input, strategy, model, h, n_scenes});
        if (*train) return cmd_train(common, {input, epochs, n_scenes, lr});
        if (*eval) return cmd_eval(common, input, dets);
        if (*rob) return cmd_robustness(common, input, trials, n_scenes);
        if (*abl) return cmd_ablate(common, input, h_values, n_scenes);
        if (*rep) return cmd_report(common, input);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const SchemaError& e) {
        std::cerr << "schema error at " << e.path() << ": " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "parse error at line " << e.line() << ", column " << e.column() << ": " << e.reason() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
