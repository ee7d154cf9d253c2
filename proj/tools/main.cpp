#include "nebp/io.hpp"
#include "nebp/metrics.hpp"
#include "nebp/nebp.hpp"
#include "nebp/simulator.hpp"
#include "nebp/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.3.0";

struct Scene {
    std::string name;
    nebp::Dataset data;
};

/// A directory contributes every scene_*.json in name order; a file is a single scene.
std::vector<Scene> load_scenes(const fs::path& path) {
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            const auto name = e.path().filename().string();
            if (e.is_regular_file() && name.rfind("scene_", 0) == 0 && e.path().extension() == ".json") {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path)) {
        files.push_back(path);
    } else {
        throw nebp::ConfigError("data path does not exist: " + path.string());
    }
    if (files.empty()) throw nebp::ConfigError("no scene_*.json files in " + path.string());
    std::vector<Scene> scenes;
    for (const auto& f : files) {
        try {
            scenes.push_back({f.stem().string(), nebp::dataset_from_json(nebp::read_json_file(f))});
        } catch (const nlohmann::json::exception& e) {
            throw nebp::ConfigError(f.string() + ": " + e.what());
        }
    }
    return scenes;
}

std::vector<nebp::Dataset> datasets(const std::vector<Scene>& scenes) {
    std::vector<nebp::Dataset> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(s.data);
    return out;
}

nebp::ModelParams load_params(const std::string& path) {
    if (path.empty()) return nebp::validate_params(nebp::ModelParams{});
    return nebp::model_params_from_json(nebp::read_json_file(path));
}

nebp::Calibration load_calibration(const std::string& path) {
    if (path.empty()) return {};
    return nebp::calibration_from_json(nebp::read_json_file(path));
}

/// Writes the manifest. The hash covers the canonical dump of `config` only, so identical
/// invocations hash identically regardless of where outputs go.
void write_manifest(const fs::path& out, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs) {
    const std::string canonical = config.dump();
    json m{{"command", command},
           {"version", kVersion},
           {"config", config},
           {"config_hash", nebp::fnv1a_hex(canonical)},
           {"outputs", outputs}};
    nebp::write_text_atomic(out / "manifest.json", m.dump(2) + "\n");
}

json file_digest(const std::string& path) {
    if (path.empty()) return nullptr;
    return {{"path", path}, {"fnv1a", nebp::fnv1a_hex(nebp::read_text_file(path))}};
}

struct SimulateArgs {
    std::string scenario;
    std::string family;
    int scenes = 1;
    std::uint64_t seed = 0;
    std::string out = "out";
};

int run_simulate(const SimulateArgs& a) {
    if (!a.scenario.empty() && !a.family.empty()) throw nebp::ConfigError("--scenario and --family are exclusive");
    if (a.scenes < 1) throw nebp::ConfigError("--scenes must be positive");
    std::vector<nebp::ScenarioConfig> configs;
    json source;
    if (!a.scenario.empty()) {
        nebp::ScenarioConfig cfg = nebp::scenario_config_from_json(nebp::read_json_file(a.scenario));
        for (int s = 0; s < a.scenes; ++s) {
            cfg.rng_seed = a.seed + static_cast<std::uint64_t>(s);
            configs.push_back(cfg);
        }
        source = {{"scenario", nebp::to_json(cfg)}};
    } else {
        const nebp::ScenarioFamily family =
            a.family.empty() ? nebp::ScenarioFamily{} : nebp::scenario_family_from_json(nebp::read_json_file(a.family));
        for (int s = 0; s < a.scenes; ++s) {
            configs.push_back(nebp::sample_scenario(family, a.seed + static_cast<std::uint64_t>(s)));
        }
        source = {{"family", nebp::to_json(family)}};
    }
    const fs::path out(a.out);
    std::vector<std::string> outputs;
    for (std::size_t s = 0; s < configs.size(); ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04zu", s);
        const nebp::Dataset d = nebp::simulate(configs[s]);
        nebp::write_text_atomic(out / (std::string(name) + ".json"), nebp::to_json(d).dump() + "\n");
        nebp::write_text_atomic(out / (std::string(name) + ".measurements.csv"), nebp::measurements_csv(d.frames));
        outputs.push_back(std::string(name) + ".json");
        outputs.push_back(std::string(name) + ".measurements.csv");
    }
    json config = source;
    config["scenes"] = a.scenes;
    config["seed"] = a.seed;
    write_manifest(out, "simulate", config, outputs);
    return 0;
}

struct TrackArgs {
    std::string data;
    std::string method = "bp";
    std::string params;
    std::string checkpoint;
    std::string calibration;
    std::uint64_t seed = 0;
    std::string out = "out";
    int jobs = 1;
};

int run_track(const TrackArgs& a) {
    const nebp::Method method = nebp::parse_method(a.method);
    const nebp::ModelParams params = load_params(a.params);
    const nebp::Calibration cal = load_calibration(a.calibration);
    std::optional<nebp::NebpNetworks> nets;
    if (method != nebp::Method::kBp) {
        if (a.checkpoint.empty()) throw nebp::ConfigError("--checkpoint is required for method " + a.method);
        nets = nebp::networks_from_checkpoint(nebp::read_json_file(a.checkpoint));
    }
    const auto scenes = load_scenes(a.data);
    const fs::path out(a.out);
    std::vector<std::string> outputs(scenes.size());
    nebp::parallel_for(scenes.size(), a.jobs, [&](std::size_t s) {
        const auto est = nebp::track_sequence(scenes[s].data.frames, params, method, nets ? &*nets : nullptr, cal,
                                              a.seed + s);
        outputs[s] = scenes[s].name + ".estimates.csv";
        nebp::write_text_atomic(out / outputs[s], nebp::estimates_csv(est));
    });
    json config{{"data", a.data},
                {"method", nebp::method_name(method)},
                {"params", nebp::to_json(params)},
                {"checkpoint", file_digest(a.checkpoint)},
                {"calibration", nebp::calibration_json(cal)},
                {"seed", a.seed}};
    write_manifest(out, "track", config, outputs);
    return 0;
}

struct EvaluateArgs {
    std::string data;
    std::string estimates;
    std::string out = "out";
    double gospa_c = 10.0;
    double dist = 2.0;
};

int run_evaluate(const EvaluateArgs& a) {
    const auto scenes = load_scenes(a.data);
    const fs::path est_dir = a.estimates.empty() ? fs::path(a.out) : fs::path(a.estimates);
    nebp::GospaParams gp;
    gp.c = a.gospa_c;
    if (!(gp.c > 0.0)) throw nebp::ConfigError("--gospa-c must be positive");
    std::vector<nebp::EvalReport> reports;
    json per_scene = json::object();
    std::string csv = "scene," + nebp::csv_header(nebp::EvalReport{}) + "\n";
    for (const auto& s : scenes) {
        const fs::path file = est_dir / (s.name + ".estimates.csv");
        const auto est = nebp::estimates_from_csv(nebp::read_text_file(file), s.data.frames.size());
        reports.push_back(nebp::evaluate(est, s.data.truth, gp, a.dist));
        per_scene[s.name] = nebp::to_json(reports.back());
        csv += s.name + "," + nebp::csv_row(reports.back()) + "\n";
    }
    const nebp::EvalReport mean = nebp::aggregate(reports);
    csv += "mean," + nebp::csv_row(mean) + "\n";
    const fs::path out(a.out);
    nebp::write_text_atomic(out / "report.json", json{{"mean", nebp::to_json(mean)}, {"scenes", per_scene}}.dump(2) + "\n");
    nebp::write_text_atomic(out / "report.csv", csv);
    json config{{"data", a.data}, {"estimates", est_dir.string()}, {"gospa_c", gp.c}, {"dist_thresh", a.dist}};
    write_manifest(out, "evaluate", config, {"report.json", "report.csv"});
    std::cout << "gospa_mean " << mean.gospa_mean << " amota " << mean.amota << " ids " << mean.ids << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string params;
    std::string init;
    std::string out = "out";
    std::uint64_t seed = 0;
    int epochs = 8;
    double lr = 1e-4;
    double eps = 0.1;
    double t_dist = 2.0;
    int feature_dim = 128;
    int hidden_dim = 128;
    int gnn_iterations = 3;
};

int run_train(const TrainArgs& a) {
    const nebp::ModelParams params = load_params(a.params);
    const auto scenes = datasets(load_scenes(a.data));
    nebp::TrainConfig tc;
    tc.lr = a.lr;
    tc.epochs = a.epochs;
    tc.eps = a.eps;
    tc.t_dist = a.t_dist;
    tc.seed = a.seed;
    if (!(tc.lr > 0.0) || tc.epochs < 0 || !(tc.t_dist > 0.0) || tc.eps < 0.0) {
        throw nebp::ConfigError("invalid training hyperparameters");
    }
    nebp::AdamConfig ac;
    ac.lr = tc.lr;
    nebp::NebpNetworks nets;
    nebp::Adam adam(ac);
    if (!a.init.empty()) {
        const json ck = nebp::read_json_file(a.init);
        nets = nebp::networks_from_checkpoint(ck);
        adam = nebp::adam_from_checkpoint(ck, ac);
    } else {
        nebp::NebpConfig nc;
        nc.shape_dim = scenes.front().config.shape_dim;
        nc.feature_dim = a.feature_dim;
        nc.hidden_dim = a.hidden_dim;
        nc.gnn_iterations = a.gnn_iterations;
        nc.seed = a.seed + 1;
        nc.validate();
        nets = nebp::NebpNetworks::create(nc);
    }
    const fs::path out(a.out);
    std::string log = nebp::epoch_csv_header() + "\n";
    nebp::train(nets, adam, scenes, params, tc, [&](const nebp::EpochLog& e) {
        log += nebp::epoch_csv_row(e) + "\n";
        nebp::write_text_atomic(out / "epochs.csv", log);
        std::cerr << "epoch " << e.epoch << " loss " << e.loss_total << "\n";
    });
    nebp::write_text_atomic(out / "epochs.csv", log);
    nebp::write_text_atomic(out / "checkpoint.json", nebp::checkpoint_json(nets, &adam).dump() + "\n");
    json config{{"data", a.data},
                {"params", nebp::to_json(params)},
                {"init", file_digest(a.init)},
                {"network", nebp::to_json(nets.config)},
                {"lr", tc.lr},
                {"epochs", tc.epochs},
                {"eps", tc.eps},
                {"t_dist", tc.t_dist},
                {"seed", tc.seed}};
    write_manifest(out, "train", config, {"checkpoint.json", "epochs.csv"});
    return 0;
}

struct CalibrateArgs {
    std::string data;
    std::string params;
    std::string checkpoint;
    std::string method = "nebp";
    std::string metric = "gospa";
    std::string out = "out";
    std::uint64_t seed = 0;
    int jobs = 1;
};

int run_calibrate(const CalibrateArgs& a) {
    const nebp::Method method = nebp::parse_method(a.method);
    if (method == nebp::Method::kBp || method == nebp::Method::kNebpNc) {
        throw nebp::ConfigError("calibration needs a calibrated NEBP method");
    }
    const nebp::CalibrationMetric metric = nebp::parse_calibration_metric(a.metric);
    if (a.checkpoint.empty()) throw nebp::ConfigError("--checkpoint is required");
    const nebp::NebpNetworks nets = nebp::networks_from_checkpoint(nebp::read_json_file(a.checkpoint));
    const nebp::ModelParams params = load_params(a.params);
    const auto scenes = datasets(load_scenes(a.data));
    const nebp::CalibrationResult res =
        nebp::calibrate(nets, scenes, params, method, metric, nebp::CalibrationGrid{}, a.seed, a.jobs);
    const fs::path out(a.out);
    nebp::write_text_atomic(out / "calibration.json", nebp::calibration_json(res.best).dump(2) + "\n");
    std::string table = "temperature,sigmoid_delta,value\n";
    for (const auto& e : res.table) {
        table += (std::isinf(e.temperature) ? std::string("inf") : std::to_string(e.temperature)) + "," +
                 std::to_string(e.sigmoid_delta) + "," + std::to_string(e.value) + "\n";
    }
    nebp::write_text_atomic(out / "calibration_grid.csv", table);
    json config{{"data", a.data},
                {"params", nebp::to_json(params)},
                {"checkpoint", file_digest(a.checkpoint)},
                {"method", nebp::method_name(method)},
                {"metric", a.metric},
                {"seed", a.seed}};
    write_manifest(out, "calibrate", config, {"calibration.json", "calibration_grid.csv"});
    std::cout << "temperature " << res.best.temperature << " delta " << res.best.delta << " value " << res.best_value
              << "\n";
    return 0;
}

int fail(int code, const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural enhanced belief propagation multi-object tracker"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate synthetic scenes");
    simulate->add_option("--scenario", sim.scenario, "Scenario config JSON")->check(CLI::ExistingFile);
    simulate->add_option("--family", sim.family, "Scenario family JSON")->check(CLI::ExistingFile);
    simulate->add_option("--scenes", sim.scenes, "Number of scenes");
    simulate->add_option("--seed", sim.seed, "Seed of the first scene");
    simulate->add_option("--out", sim.out, "Output directory");

    TrackArgs trk;
    auto* track = app.add_subcommand("track", "Run a tracker over scenes");
    track->add_option("--data", trk.data, "Scene file or directory")->required();
    track->add_option("--method", trk.method, "bp, nebp, nebp-m, nebp-r, nebp-a or nebp-nc");
    track->add_option("--params", trk.params, "Model parameters JSON")->check(CLI::ExistingFile);
    track->add_option("--checkpoint", trk.checkpoint, "Network checkpoint")->check(CLI::ExistingFile);
    track->add_option("--calibration", trk.calibration, "Calibration JSON")->check(CLI::ExistingFile);
    track->add_option("--seed", trk.seed, "Tracker seed (scene s uses seed + s)");
    track->add_option("--out", trk.out, "Output directory");
    track->add_option("--jobs", trk.jobs, "Parallel scenes")->check(CLI::PositiveNumber);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score estimates against ground truth");
    evaluate->add_option("--data", ev.data, "Scene file or directory")->required();
    evaluate->add_option("--estimates", ev.estimates, "Directory with *.estimates.csv (default: --out)");
    evaluate->add_option("--out", ev.out, "Output directory");
    evaluate->add_option("--gospa-c", ev.gospa_c, "GOSPA cutoff");
    evaluate->add_option("--dist", ev.dist, "CLEAR matching distance");

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train the enhancement networks");
    train->add_option("--data", tr.data, "Scene file or directory")->required();
    train->add_option("--params", tr.params, "Model parameters JSON")->check(CLI::ExistingFile);
    train->add_option("--checkpoint", tr.init, "Resume from checkpoint")->check(CLI::ExistingFile);
    train->add_option("--out", tr.out, "Output directory");
    train->add_option("--seed", tr.seed, "Seed for initialization and shuffling");
    train->add_option("--epochs", tr.epochs, "Epochs");
    train->add_option("--lr", tr.lr, "Adam learning rate");
    train->add_option("--eps", tr.eps, "Weight of the negative rejection term");
    train->add_option("--t-dist", tr.t_dist, "Pseudo-label distance");
    train->add_option("--feature-dim", tr.feature_dim, "Feature size (embedding is twice this)");
    train->add_option("--hidden-dim", tr.hidden_dim, "Hidden layer size");
    train->add_option("--gnn-iterations", tr.gnn_iterations, "Message passing rounds");

    CalibrateArgs cb;
    auto* calibrate = app.add_subcommand("calibrate", "Grid search of the rejection calibration");
    calibrate->add_option("--data", cb.data, "Scene file or directory")->required();
    calibrate->add_option("--params", cb.params, "Model parameters JSON")->check(CLI::ExistingFile);
    calibrate->add_option("--checkpoint", cb.checkpoint, "Network checkpoint")->check(CLI::ExistingFile);
    calibrate->add_option("--method", cb.method, "NEBP variant to calibrate");
    calibrate->add_option("--metric", cb.metric, "gospa or amota");
    calibrate->add_option("--out", cb.out, "Output directory");
    calibrate->add_option("--seed", cb.seed, "Tracker seed");
    calibrate->add_option("--jobs", cb.jobs, "Parallel scenes")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(2, "config", e.what());
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*track) return run_track(trk);
        if (*evaluate) return run_evaluate(ev);
        if (*train) return run_train(tr);
        if (*calibrate) return run_calibrate(cb);
    } catch (const nebp::ConfigError& e) {
        return fail(2, "config", e.what());
    } catch (const nebp::TrainingDiverged& e) {
        return fail(3, "diverged", e.what());
    } catch (const std::exception& e) {
        return fail(3, "runtime", e.what());
    }
    return 3;
}
