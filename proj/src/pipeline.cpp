#include "ssm/pipeline.hpp"

#include "ssm/align.hpp"
#include "ssm/cluster.hpp"
#include "ssm/errors.hpp"
#include "ssm/geometry.hpp"
#include "ssm/io.hpp"
#include "ssm/metrics.hpp"
#include "ssm/mlp.hpp"
#include "ssm/morphometry.hpp"
#include "ssm/pca.hpp"
#include "ssm/rng.hpp"
#include "ssm/screening.hpp"
#include "ssm/split.hpp"
#include "ssm/stats.hpp"
#include "ssm/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ssm::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
}

struct RunContext {
    json config;
    std::uint64_t seed = 0;
    fs::path out;
    std::string command;
    std::chrono::steady_clock::time_point started;
};

RunContext begin_run(const std::string& command, const CommandArgs& args) {
    RunContext ctx;
    ctx.command = command;
    ctx.config = load_config(args.config_path);
    if (args.seed_override) {
        ctx.config["seed"] = *args.seed_override;
    }
    if (!ctx.config.contains("seed") || !ctx.config["seed"].is_number_unsigned()) {
        throw ConfigError("config requires an explicit nonnegative integer 'seed'");
    }
    ctx.seed = ctx.config["seed"].get<std::uint64_t>();
    if (args.out_override) {
        ctx.config["out"] = args.out_override->string();
    }
    if (!ctx.config.contains("out") || !ctx.config["out"].is_string()) {
        throw ConfigError("config requires an output directory 'out'");
    }
    ctx.out = fs::path(ctx.config["out"].get<std::string>());
    fs::create_directories(ctx.out);
    // Interrupted runs stay marked; the marker is removed on success.
    std::ofstream(ctx.out / "RUN_IN_PROGRESS") << command << '\n';
    ctx.started = std::chrono::steady_clock::now();
    return ctx;
}

void end_run(const RunContext& ctx) {
    // Resolved config + seed sidecar for reproducibility.
    std::ofstream cfg(ctx.out / (ctx.command + "_config.json"));
    cfg << ctx.config.dump(2) << '\n';
    // The only timestamped output lives in the log, never in reports.
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - ctx.started)
                             .count();
    const auto wall = std::chrono::system_clock::now();
    std::ofstream log(ctx.out / "run.log", std::ios::app);
    log << ctx.command << " finished in " << elapsed << " ms at "
        << std::chrono::duration_cast<std::chrono::seconds>(wall.time_since_epoch()).count()
        << " (unix)\n";
    fs::remove(ctx.out / "RUN_IN_PROGRESS");
}

const json& section(const json& cfg, const std::string& name) {
    if (!cfg.contains(name) || !cfg[name].is_object()) {
        throw ConfigError("config is missing the '" + name + "' section");
    }
    return cfg[name];
}

std::vector<fs::path> point_file_list(const json& node) {
    std::vector<fs::path> files;
    if (node.contains("points") && node["points"].is_array()) {
        for (const auto& p : node["points"]) {
            files.emplace_back(p.get<std::string>());
        }
    } else if (node.contains("points_dir")) {
        const fs::path dir(node["points_dir"].get<std::string>());
        if (!fs::is_directory(dir)) {
            throw DataError("points_dir does not exist: " + dir.string());
        }
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".pts") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else {
        throw ConfigError("expected 'points' list or 'points_dir'");
    }
    if (files.empty()) {
        throw DataError("no point files found");
    }
    return files;
}

// Loads the point files named by `node`, honoring an optional "mirror_axis"
// preprocessing flag (folds mirrored anatomy onto one orientation).
CorrespondenceEnsemble load_ensemble(const json& node) {
    const int mirror_axis = node.value("mirror_axis", -1);
    CorrespondenceEnsemble ens;
    for (const auto& f : point_file_list(node)) {
        PointSet ps = load_point_set(f);
        if (mirror_axis >= 0) {
            ps = mirror(ps, mirror_axis);
        }
        ens.shapes.push_back(std::move(ps));
    }
    ens.validate();
    return ens;
}

BoxBumpSpec spec_from_json(const json& node) {
    BoxBumpSpec spec;
    if (node.contains("extents")) {
        const auto& e = node["extents"];
        if (!e.is_array() || e.size() != 3) {
            throw ConfigError("synth.extents must be a 3-element array");
        }
        spec.extents = Eigen::Vector3d(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
    }
    spec.sampling_density = node.value("sampling_density", spec.sampling_density);
    spec.bump_radius = node.value("bump_radius", spec.bump_radius);
    spec.bump_height = node.value("bump_height", spec.bump_height);
    spec.bump_travel = node.value("bump_travel", spec.bump_travel);
    spec.grid_resolution = node.value("grid_resolution", spec.grid_resolution);
    spec.domain_padding = node.value("domain_padding", spec.domain_padding);
    spec.validate();
    return spec;
}

SideBumpParams side_from_json(const json& node) {
    SideBumpParams side;
    side.center_y = node.value("center_y", side.center_y);
    side.center_z = node.value("center_z", side.center_z);
    side.radius = node.value("radius", side.radius);
    side.height = node.value("height", side.height);
    side.top_position = node.value("top_position", side.top_position);
    return side;
}

ScreeningConfig screening_from_json(const json& node) {
    ScreeningConfig cfg;
    if (node.contains("lambda") && !node["lambda"].is_null()) {
        cfg.lambda = node["lambda"].get<double>();
    }
    cfg.beta = node.value("beta", cfg.beta);
    cfg.initial_offset = node.value("initial_offset", cfg.initial_offset);
    cfg.convergence_tol = node.value("tolerance", cfg.convergence_tol);
    cfg.max_iters = node.value("max_iters", cfg.max_iters);
    cfg.initial_alpha_rate = node.value("alpha_rate", cfg.initial_alpha_rate);
    cfg.initial_offset_rate = node.value("offset_rate", cfg.initial_offset_rate);
    cfg.rate_growth = node.value("rate_growth", cfg.rate_growth);
    cfg.rate_backoff = node.value("rate_backoff", cfg.rate_backoff);
    cfg.align_to_mean = node.value("align", cfg.align_to_mean);
    cfg.validate();
    return cfg;
}

ModeRule mode_rule_from_json(const json& node) {
    if (node.contains("mode_count")) {
        return ModeRule::fixed(node["mode_count"].get<int>());
    }
    return ModeRule::variance(node.value("variance_fraction", 0.97));
}

std::string zero_pad(int value, int width) {
    std::ostringstream os;
    os << value;
    std::string s = os.str();
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

void write_offsets_csv(const fs::path& path, const Eigen::VectorXd& offsets,
                       const Eigen::VectorXd& thresholded) {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < offsets.size(); ++i) {
        rows.push_back({std::to_string(i), csv_cell(offsets[i]), csv_cell(thresholded[i])});
    }
    write_csv(path, {"point", "offset_mm", "thresholded_mm"}, rows);
}

Eigen::VectorXd read_offsets_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open offsets file: " + path.string());
    }
    std::string line;
    std::getline(in, line); // header
    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string idx, offset;
        if (!std::getline(ls, idx, ',') || !std::getline(ls, offset, ',')) {
            throw DataError(path.string() + ": malformed offsets row");
        }
        vals.push_back(std::stod(offset));
    }
    if (vals.empty()) {
        throw DataError(path.string() + ": no offsets found");
    }
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void write_manifest(const RunContext& ctx, const std::vector<fs::path>& files) {
    json manifest;
    manifest["command"] = ctx.command;
    manifest["seed"] = ctx.seed;
    json entries = json::object();
    for (const auto& f : files) {
        entries[fs::relative(f, ctx.out).generic_string()] = file_hash(f);
    }
    manifest["files"] = entries;
    std::ofstream out(ctx.out / "manifest.json");
    out << manifest.dump(2) << '\n';
    std::cout << "manifest: " << (ctx.out / "manifest.json").string() << " (" << files.size()
              << " files)\n";
}

// Shared synth writer used by cmd_synth and cmd_repro.
std::vector<fs::path> write_ensemble_files(const fs::path& dir, const BoxBumpEnsemble& data) {
    std::vector<fs::path> written;
    fs::create_directories(dir);
    for (std::size_t n = 0; n < data.ensemble.shapes.size(); ++n) {
        const std::string stem = "shape_" + zero_pad(static_cast<int>(n), 3);
        const fs::path pts = dir / (stem + ".pts");
        save_point_set(data.ensemble.shapes[n], pts);
        written.push_back(pts);
        const fs::path sdt = dir / (stem + ".sdt");
        save_volume(data.sdts[n], sdt);
        written.push_back(sdt);
        const fs::path lmk = dir / (stem + ".lmk");
        save_landmarks(data.truth.landmarks[n], lmk);
        written.push_back(lmk);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t n = 0; n < data.truth.latents.size(); ++n) {
            rows.push_back({std::to_string(n), csv_cell(data.truth.latents[n])});
        }
        const fs::path latents = dir / "latents.csv";
        write_csv(latents, {"shape", "bump_position"}, rows);
        written.push_back(latents);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < data.truth.params.size(); ++i) {
            const auto& sp = data.truth.params[i];
            rows.push_back({std::to_string(i), std::to_string(sp.face), std::to_string(sp.iu),
                            std::to_string(sp.iv)});
        }
        const fs::path params = dir / "surface_params.csv";
        write_csv(params, {"point", "face", "iu", "iv"}, rows);
        written.push_back(params);
    }
    return written;
}

} // namespace

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot hash missing file: " + path.string());
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

fs::path cmd_synth(const CommandArgs& args) {
    RunContext ctx = begin_run("synth", args);
    const json& node = section(ctx.config, "synth");
    const BoxBumpSpec spec = spec_from_json(node);
    const int n_shapes = node.value("n_shapes", 20);

    const BoxBumpEnsemble data = generate_box_bump_ensemble(spec, n_shapes);
    std::vector<fs::path> written = write_ensemble_files(ctx.out, data);

    if (node.contains("outlier")) {
        const SideBumpParams side = side_from_json(node["outlier"]);
        const BoxBumpOutlier outlier = generate_side_bump_outlier(spec, side);
        const fs::path pts = ctx.out / "outlier.pts";
        save_point_set(outlier.points, pts);
        written.push_back(pts);
        const fs::path sdt = ctx.out / "outlier.sdt";
        save_volume(outlier.sdt, sdt);
        written.push_back(sdt);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < outlier.truth.lesion_mask.size(); ++i) {
            rows.push_back({std::to_string(i), outlier.truth.lesion_mask[i] ? "1" : "0"});
        }
        const fs::path mask = ctx.out / "outlier_mask.csv";
        write_csv(mask, {"point", "in_lesion"}, rows);
        written.push_back(mask);
    }

    write_manifest(ctx, written);
    end_run(ctx);
    return ctx.out;
}

fs::path cmd_evaluate(const CommandArgs& args) {
    RunContext ctx = begin_run("evaluate", args);
    const json& node = section(ctx.config, "evaluate");

    std::vector<json> models;
    if (node.contains("models") && node["models"].is_array()) {
        for (const auto& m : node["models"]) models.push_back(m);
    } else {
        models.push_back(node);
    }

    struct ModelCurves {
        std::string name;
        MetricCurve compact, general, specific;
    };
    std::vector<ModelCurves> curves;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const json& model_cfg = models[mi];
        const std::string name = model_cfg.value("name", "model" + std::to_string(mi));
        CorrespondenceEnsemble ens = load_ensemble(model_cfg);
        if (ens.size() < 3) {
            throw DataError("evaluate: need at least 3 shapes, got " +
                            std::to_string(ens.size()));
        }
        if (model_cfg.value("align", true)) {
            ens = generalized_procrustes(ens, model_cfg.value("allow_scale", false)).aligned;
        }
        const Eigen::Index max_k = std::min<Eigen::Index>(ens.size() - 2, ens.dim() * ens.points());
        const Eigen::Index k_max =
            std::min<Eigen::Index>(node.value("k_max", static_cast<int>(max_k)), max_k);

        const PcaSubspace sub = fit_pca(ens, ModeRule::fixed(static_cast<int>(k_max)));
        const MetricCurve compact = compactness(sub, k_max);
        GeneralizationOptions gen_opts;
        gen_opts.align_to_loo_mean = node.value("loo_align", true);
        const MetricCurve general = generalization(ens, k_max, gen_opts);
        Rng rng = Rng(ctx.seed).split("specificity", mi);
        const MetricCurve specific =
            specificity(sub, ens, k_max, node.value("specificity_samples", 1000), rng);

        const fs::path csv = ctx.out / ("metrics_" + name + ".csv");
        if (node.value("rms_per_point", false)) {
            const MetricCurve grms = rms_per_point(general, ens.points());
            const MetricCurve srms = rms_per_point(specific, ens.points());
            write_metrics_csv(csv, compact, general, specific, &grms, &srms);
        } else {
            write_metrics_csv(csv, compact, general, specific);
        }
        save_spectrum_csv(sub, ctx.out / ("spectrum_" + name + ".csv"));
        curves.push_back({name, compact, general, specific});
    }

    // Curve-wise comparisons; lower_K counts how often each model's curve is
    // below the other's. For compactness both orderings circulate in the
    // literature, so the counts are reported without picking a winner.
    if (curves.size() > 1) {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t a = 0; a < curves.size(); ++a) {
            for (std::size_t b = a + 1; b < curves.size(); ++b) {
                for (auto metric :
                     {&ModelCurves::compact, &ModelCurves::general, &ModelCurves::specific}) {
                    const CurveComparison cmp =
                        compare_curves(curves[a].*metric, curves[b].*metric);
                    rows.push_back({curves[a].name, curves[b].name, cmp.metric,
                                    std::to_string(cmp.a_lower), std::to_string(cmp.b_lower),
                                    std::to_string(cmp.ties)});
                }
            }
        }
        write_csv(ctx.out / "comparison.csv",
                  {"model_a", "model_b", "metric", "a_lower_count", "b_lower_count", "ties"},
                  rows);
    }
    end_run(ctx);
    return ctx.out;
}

fs::path cmd_cluster(const CommandArgs& args) {
    RunContext ctx = begin_run("cluster", args);
    const json& node = section(ctx.config, "cluster");
    const std::vector<fs::path> files = point_file_list(node);
    const CorrespondenceEnsemble ens = load_ensemble(node);
    const std::vector<ShapeVector> vectors = ens.shape_vectors();

    const int restarts = node.value("restarts", 10);
    const int k_max = std::min<int>(node.value("k_max", 8), static_cast<int>(vectors.size()));
    Rng rng = Rng(ctx.seed).split("cluster");

    const ElbowResult eb = elbow(vectors, k_max, rng, restarts);
    {
        std::vector<std::vector<std::string>> rows;
        for (int k = 1; k <= k_max; ++k) {
            rows.push_back({std::to_string(k), csv_cell(eb.variance_explained[k - 1])});
        }
        write_csv(ctx.out / "elbow.csv", {"k", "variance_explained"}, rows);
    }

    const int k = node.value("k", eb.k_star);
    const ClusterResult result = node.value("method", std::string("kmeans")) == "kmedoids"
                                     ? kmedoids(vectors, k, rng, restarts)
                                     : kmeans(vectors, k, rng, restarts);
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < result.labels.size(); ++i) {
            rows.push_back({std::to_string(i), files[i].filename().string(),
                            std::to_string(result.labels[i])});
        }
        write_csv(ctx.out / "labels.csv", {"index", "file", "label"}, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"k_star", std::to_string(eb.k_star)});
        rows.push_back({"k_used", std::to_string(k)});
        rows.push_back({"wcss", csv_cell(result.wcss)});
        rows.push_back({"variance_explained", csv_cell(result.variance_explained)});
        write_csv(ctx.out / "cluster_report.csv", {"key", "value"}, rows);
    }
    const std::vector<PointSet> means = cluster_mean_shapes(ens, result.labels);
    for (std::size_t c = 0; c < means.size(); ++c) {
        save_point_set(means[c], ctx.out / ("cluster_mean_" + zero_pad(static_cast<int>(c), 2) +
                                            ".pts"));
    }
    end_run(ctx);
    return ctx.out;
}

fs::path cmd_infer_landmarks(const CommandArgs& args) {
    RunContext ctx = begin_run("infer-landmarks", args);
    const json& node = section(ctx.config, "infer_landmarks");

    const PointSet mean_points = load_point_set(node.at("mean_points").get<std::string>());
    const LandmarkSet mean_landmarks = load_landmarks(node.at("mean_landmarks").get<std::string>());
    const double reg = node.value("regularization", 0.0);
    const bool use_procrustes = node.value("procrustes", false);

    std::vector<fs::path> subjects;
    for (const auto& s : node.at("subjects")) subjects.emplace_back(s.get<std::string>());
    std::vector<fs::path> truth_files;
    if (node.contains("truth_landmarks")) {
        for (const auto& s : node["truth_landmarks"]) truth_files.emplace_back(s.get<std::string>());
        if (truth_files.size() != subjects.size()) {
            throw ConfigError("infer_landmarks: truth_landmarks must match subjects");
        }
    }

    std::vector<std::vector<std::string>> error_rows;
    std::vector<double> truth_meas, pred_meas;
    const std::string meas_curve = node.value("measurement_curve", std::string());

    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const PointSet subject = load_point_set(subjects[si]);
        LandmarkSet predicted =
            use_procrustes
                ? procrustes_fit_landmarks(mean_landmarks, subject, mean_points,
                                           node.value("allow_scale", true))
                : infer_landmarks(mean_points, mean_landmarks, subject, reg);
        const std::string stem = subjects[si].stem().string();
        save_landmarks(predicted, ctx.out / ("predicted_" + stem + ".lmk"));

        if (!truth_files.empty()) {
            const LandmarkSet truth = load_landmarks(truth_files[si]);
            const MeasurementReport rep = landmark_errors(predicted, truth);
            for (const auto& [curve, err] : rep.curve_errors) {
                error_rows.push_back({stem, curve, csv_cell(err)});
            }
            error_rows.push_back({stem, "overall", csv_cell(rep.overall_mean_error)});
            if (!meas_curve.empty()) {
                const auto pd = fit_ellipse_diameters(PointSet(predicted.curves.at(meas_curve)));
                const auto td = fit_ellipse_diameters(PointSet(truth.curves.at(meas_curve)));
                pred_meas.push_back(pd.first);
                truth_meas.push_back(td.first);
                pred_meas.push_back(pd.second);
                truth_meas.push_back(td.second);
            }
        }
    }
    if (!error_rows.empty()) {
        write_csv(ctx.out / "landmark_errors.csv", {"subject", "curve", "mean_error_mm"},
                  error_rows);
    }
    if (!truth_meas.empty()) {
        const MeasurementReport rep = measurement_report(truth_meas, pred_meas);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < rep.truth.size(); ++i) {
            rows.push_back({std::to_string(i), csv_cell(rep.truth[i]), csv_cell(rep.predicted[i]),
                            csv_cell(rep.abs_difference[i])});
        }
        write_csv(ctx.out / "measurements.csv",
                  {"measurement", "truth_mm", "predicted_mm", "abs_difference_mm"}, rows);
        if (node.value("ttest", true) && truth_meas.size() >= 2) {
            const TTestResult tt = paired_t_test(truth_meas, pred_meas);
            write_csv(ctx.out / "ttest.csv", {"statistic", "df", "p_two_sided", "degenerate"},
                      {{csv_cell(tt.t), std::to_string(tt.df), csv_cell(tt.p),
                        tt.degenerate ? "1" : "0"}});
        }
    }
    end_run(ctx);
    return ctx.out;
}

namespace {

struct ScreenedSample {
    std::string name;
    ScreeningResult result;
    Eigen::VectorXd thresholded;
};

// Screens every sample against the subspace and writes the per-sample and
// group outputs; shared between cmd_screen and cmd_repro.
std::vector<ScreenedSample> run_screening(const fs::path& out, const PcaSubspace& sub,
                                          const std::vector<std::string>& names,
                                          const std::vector<ShapeVector>& samples,
                                          const std::vector<const ScalarVolume*>& sdts,
                                          const ScreeningConfig& cfg, double threshold) {
    std::vector<ScreenedSample> screened;
    std::vector<std::vector<std::string>> report_rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ScreenedSample item;
        item.name = names[i];
        item.result = screen(samples[i], *sdts[i], sub, cfg);
        item.thresholded = threshold_offsets(item.result.offsets, threshold);

        write_offsets_csv(out / ("offsets_" + item.name + ".csv"), item.result.offsets,
                          item.thresholded);
        save_point_set(unflatten(item.result.reconstruction, 3),
                       out / ("recon_" + item.name + ".pts"));
        {
            PointSet surface = unflatten(item.result.reconstruction, 3);
            surface.pts += item.result.offsets.asDiagonal() * item.result.normals;
            save_point_set(surface, out / ("offset_surface_" + item.name + ".pts"));
        }
        {
            std::vector<std::vector<std::string>> rows;
            for (std::size_t t = 0; t < item.result.energy_trace.size(); ++t) {
                rows.push_back({std::to_string(t), csv_cell(item.result.energy_trace[t])});
            }
            write_csv(out / ("energy_" + item.name + ".csv"), {"iteration", "energy"}, rows);
        }
        const double max_abs = item.result.offsets.cwiseAbs().maxCoeff();
        const bool control_like = item.thresholded.cwiseAbs().maxCoeff() == 0.0;
        report_rows.push_back({item.name, item.result.converged ? "1" : "0",
                               std::to_string(item.result.iterations),
                               csv_cell(item.result.energy_trace.back()),
                               csv_cell(item.result.resolved_lambda), csv_cell(max_abs),
                               control_like ? "1" : "0"});
        screened.push_back(std::move(item));
    }
    write_csv(out / "screen_report.csv",
              {"sample", "converged", "iterations", "final_energy", "lambda", "max_abs_offset_mm",
               "control_like"},
              report_rows);

    // Group difference between the offset surfaces and the plain
    // reconstructions, i.e. what the offsets added.
    if (!screened.empty()) {
        CorrespondenceEnsemble with_offsets, plain;
        for (const auto& item : screened) {
            PointSet surface = unflatten(item.result.reconstruction, 3);
            surface.pts += item.result.offsets.asDiagonal() * item.result.normals;
            with_offsets.shapes.push_back(std::move(surface));
            plain.shapes.push_back(unflatten(item.result.reconstruction, 3));
        }
        const GroupDifference diff = group_difference(with_offsets, plain);
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index i = 0; i < diff.magnitude.size(); ++i) {
            rows.push_back({std::to_string(i), csv_cell(diff.displacement(i, 0)),
                            csv_cell(diff.displacement(i, 1)), csv_cell(diff.displacement(i, 2)),
                            csv_cell(diff.magnitude[i])});
        }
        write_csv(out / "group_difference.csv", {"point", "dx_mm", "dy_mm", "dz_mm", "magnitude_mm"},
                  rows);
    }
    return screened;
}

} // namespace

fs::path cmd_screen(const CommandArgs& args) {
    RunContext ctx = begin_run("screen", args);
    const json& node = section(ctx.config, "screen");

    json train_node = node.contains("train") ? node["train"] : node;
    CorrespondenceEnsemble train = load_ensemble(train_node);
    const PcaSubspace sub = fit_pca(train, mode_rule_from_json(node));

    std::vector<std::string> names;
    std::vector<ShapeVector> samples;
    std::vector<ScalarVolume> volumes;
    if (!node.contains("samples") || !node["samples"].is_array() || node["samples"].empty()) {
        throw ConfigError("screen: 'samples' must list {name, points, sdt} entries");
    }
    for (const auto& s : node["samples"]) {
        names.push_back(s.at("name").get<std::string>());
        samples.push_back(flatten(load_point_set(s.at("points").get<std::string>())));
        volumes.push_back(load_volume(s.at("sdt").get<std::string>()));
    }
    std::vector<const ScalarVolume*> sdt_ptrs;
    for (const auto& v : volumes) sdt_ptrs.push_back(&v);

    const ScreeningConfig cfg = screening_from_json(node);
    run_screening(ctx.out, sub, names, samples, sdt_ptrs, cfg, node.value("threshold", 0.005));
    end_run(ctx);
    return ctx.out;
}

fs::path cmd_classify(const CommandArgs& args) {
    RunContext ctx = begin_run("classify", args);
    const json& node = section(ctx.config, "classify");

    std::vector<Eigen::VectorXd> feature_rows;
    std::vector<double> labels;
    for (const auto& f : node.at("control_offsets")) {
        feature_rows.push_back(read_offsets_csv(f.get<std::string>()));
        labels.push_back(0.0);
    }
    for (const auto& f : node.at("pathology_offsets")) {
        feature_rows.push_back(read_offsets_csv(f.get<std::string>()));
        labels.push_back(1.0);
    }
    if (feature_rows.empty()) {
        throw DataError("classify: no offset files");
    }
    const Eigen::Index dim = feature_rows.front().size();
    Eigen::MatrixXd features(static_cast<Eigen::Index>(feature_rows.size()), dim);
    for (std::size_t i = 0; i < feature_rows.size(); ++i) {
        if (feature_rows[i].size() != dim) {
            throw DataError("classify: offset files disagree in length");
        }
        features.row(static_cast<Eigen::Index>(i)) = feature_rows[i].transpose();
    }
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(labels.data(),
                                                    static_cast<Eigen::Index>(labels.size()));

    Rng rng = Rng(ctx.seed).split("classify");
    const ClassifierReport report = repeated_split_experiment(
        features, y, node.value("repeats", 10), node.value("test_fraction", 0.25),
        default_config_grid(Rng(ctx.seed).split("mlp-init").seed()), rng);
    write_classifier_report_csv(report, ctx.out / "classify_report.csv");
    end_run(ctx);
    return ctx.out;
}

fs::path cmd_repro(const CommandArgs& args) {
    RunContext ctx = begin_run("repro", args);
    const json node = ctx.config.value("repro", json::object());
    const Rng root(ctx.seed);

    // --- Synthetic ensemble -------------------------------------------------
    BoxBumpSpec spec = spec_from_json(node.value("synth", json::object()));
    const int n_shapes = node.value("n_shapes", 20);
    const BoxBumpEnsemble data = generate_box_bump_ensemble(spec, n_shapes);
    write_ensemble_files(ctx.out / "synth", data);

    // --- Shape space + evaluation metrics ----------------------------------
    const PcaSubspace sub = fit_pca(data.ensemble, ModeRule::variance(0.97));
    const fs::path eval_dir = ctx.out / "evaluate";
    fs::create_directories(eval_dir);
    {
        const Eigen::Index k_max = std::min<Eigen::Index>(8, data.ensemble.size() - 2);
        const PcaSubspace full =
            fit_pca(data.ensemble, ModeRule::fixed(static_cast<int>(k_max)));
        Rng rng = root.split("specificity");
        write_metrics_csv(eval_dir / "metrics_synthetic.csv", compactness(full, k_max),
                          generalization(data.ensemble, k_max),
                          specificity(full, data.ensemble, k_max,
                                      node.value("specificity_samples", 1000), rng));
        save_spectrum_csv(full, eval_dir / "spectrum_synthetic.csv");
        // Mode walk of the first dominant mode, the proof-of-concept figure.
        for (int t = -3; t <= 3; t += 3) {
            save_point_set(unflatten(sample_mode(sub, 0, t), 3),
                           eval_dir / ("mode1_" + std::to_string(t + 3) + "sd.pts"));
        }
    }

    // --- Cluster discovery --------------------------------------------------
    {
        const fs::path dir = ctx.out / "cluster";
        fs::create_directories(dir);
        BoxBumpSpec cluster_spec = spec;
        cluster_spec.bump_travel = 7.5; // families spread across the face
        const int clusters = node.value("clusters", 4);
        std::vector<ClusterArchetype> archetypes;
        for (int c = 0; c < clusters; ++c) {
            archetypes.push_back({static_cast<double>(c) / (clusters - 1), 2.5 + 0.5 * c, 2.2});
        }
        Rng gen_rng = root.split("cluster-gen");
        const ClusterPopulation pop = generate_cluster_population(
            cluster_spec, archetypes, node.value("per_cluster", 8),
            node.value("cluster_jitter", 0.01), gen_rng);
        Rng rng = root.split("cluster");
        const ElbowResult eb =
            elbow(pop.ensemble.shape_vectors(), node.value("cluster_k_max", 8), rng);
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index k = 0; k < eb.variance_explained.size(); ++k) {
            rows.push_back({std::to_string(k + 1), csv_cell(eb.variance_explained[k])});
        }
        write_csv(dir / "elbow.csv", {"k", "variance_explained"}, rows);
        const ClusterResult cl = kmeans(pop.ensemble.shape_vectors(), eb.k_star, rng);
        std::vector<std::vector<std::string>> label_rows;
        for (std::size_t i = 0; i < cl.labels.size(); ++i) {
            label_rows.push_back({std::to_string(i), std::to_string(pop.labels[i]),
                                  std::to_string(cl.labels[i])});
        }
        write_csv(dir / "labels.csv", {"index", "truth", "found"}, label_rows);
        write_csv(dir / "cluster_report.csv", {"key", "value"},
                  {{"k_star", std::to_string(eb.k_star)},
                   {"variance_explained", csv_cell(cl.variance_explained)}});
    }

    // --- Landmark inference -------------------------------------------------
    {
        const fs::path dir = ctx.out / "landmarks";
        fs::create_directories(dir);
        const PointSet mean_pts = unflatten(sub.mean, 3);
        std::vector<PointSet> subj_pts(data.ensemble.shapes.begin(), data.ensemble.shapes.end());
        const LandmarkSet mean_lmk =
            mean_warped_landmarks(data.truth.landmarks, subj_pts, mean_pts);
        save_landmarks(mean_lmk, dir / "mean_landmarks.lmk");

        std::vector<std::vector<std::string>> rows;
        std::vector<double> truth_apex_z, pred_apex_z;
        for (std::size_t s = 0; s < subj_pts.size(); ++s) {
            const LandmarkSet pred = infer_landmarks(mean_pts, mean_lmk, subj_pts[s]);
            const MeasurementReport rep = landmark_errors(pred, data.truth.landmarks[s]);
            rows.push_back({std::to_string(s), csv_cell(rep.curve_errors.at("apex")),
                            csv_cell(rep.curve_errors.at("corners")),
                            csv_cell(rep.overall_mean_error)});
            pred_apex_z.push_back(pred.curves.at("apex")(0, 2));
            truth_apex_z.push_back(data.truth.landmarks[s].curves.at("apex")(0, 2));
        }
        write_csv(dir / "landmark_errors.csv",
                  {"subject", "apex_error_mm", "corners_error_mm", "overall_mm"}, rows);
        const TTestResult tt = paired_t_test(truth_apex_z, pred_apex_z);
        write_csv(dir / "ttest_apex_height.csv", {"statistic", "df", "p_two_sided", "degenerate"},
                  {{csv_cell(tt.t), std::to_string(tt.df), csv_cell(tt.p),
                    tt.degenerate ? "1" : "0"}});
    }

    // --- Lesion screening + classification ---------------------------------
    const fs::path screen_dir = ctx.out / "screen";
    fs::create_directories(screen_dir);
    {
        ScreeningConfig cfg;
        cfg.lambda = node.value("lambda", 0.75);
        const double threshold = node.value("threshold", 0.005);

        const int n_controls = node.value("screen_controls", 20);
        const int n_lesions = node.value("screen_lesions", 20);
        Rng rng = root.split("screen-gen");

        std::vector<std::string> names;
        std::vector<ShapeVector> samples;
        std::vector<ScalarVolume> volumes;
        std::vector<bool> is_lesion;
        for (int i = 0; i < n_controls; ++i) {
            const double s = rng.uniform(0.05, 0.95);
            names.push_back("control_" + zero_pad(i, 3));
            samples.push_back(flatten(box_bump_shape(spec, s, nullptr)));
            volumes.push_back(box_bump_sdt(spec, s, nullptr));
            is_lesion.push_back(false);
        }
        for (int i = 0; i < n_lesions; ++i) {
            SideBumpParams side = side_from_json(node.value("outlier", json::object()));
            side.top_position = rng.uniform(0.05, 0.95);
            side.center_y += rng.uniform(-1.0, 1.0);
            side.center_z += rng.uniform(-1.0, 1.0);
            side.height *= 1.0 + 0.2 * rng.uniform(-1.0, 1.0);
            const BoxBumpOutlier outlier = generate_side_bump_outlier(spec, side);
            names.push_back("lesion_" + zero_pad(i, 3));
            samples.push_back(flatten(outlier.points));
            volumes.push_back(outlier.sdt);
            is_lesion.push_back(true);
            if (i == 0) {
                std::vector<std::vector<std::string>> rows;
                for (std::size_t p = 0; p < outlier.truth.lesion_mask.size(); ++p) {
                    rows.push_back({std::to_string(p), outlier.truth.lesion_mask[p] ? "1" : "0"});
                }
                write_csv(screen_dir / "lesion_000_mask.csv", {"point", "in_lesion"}, rows);
            }
        }
        std::vector<const ScalarVolume*> sdt_ptrs;
        for (const auto& v : volumes) sdt_ptrs.push_back(&v);
        const std::vector<ScreenedSample> screened =
            run_screening(screen_dir, sub, names, samples, sdt_ptrs, cfg, threshold);

        // Offset histograms and pointwise quantile envelopes per group.
        std::vector<double> edges;
        for (int b = 0; b <= 40; ++b) edges.push_back(-1.0 + 0.1 * b);
        std::vector<std::vector<double>> control_hists, lesion_hists;
        for (std::size_t i = 0; i < screened.size(); ++i) {
            auto hist = offset_histogram(screened[i].result.offsets, edges);
            (is_lesion[i] ? lesion_hists : control_hists).push_back(std::move(hist));
        }
        const QuantileCurves cq = offset_quantile_curves(control_hists, {0.25, 0.5, 0.75});
        const QuantileCurves lq = offset_quantile_curves(lesion_hists, {0.25, 0.5, 0.75});
        std::vector<std::vector<std::string>> rows;
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            rows.push_back({csv_cell(0.5 * (edges[b] + edges[b + 1])), csv_cell(cq.curves[1][b]),
                            csv_cell(cq.envelope_lo[b]), csv_cell(cq.envelope_hi[b]),
                            csv_cell(lq.curves[1][b]), csv_cell(lq.envelope_lo[b]),
                            csv_cell(lq.envelope_hi[b])});
        }
        write_csv(screen_dir / "offset_quantiles.csv",
                  {"offset_bin_mm", "control_median", "control_lo", "control_hi", "lesion_median",
                   "lesion_lo", "lesion_hi"},
                  rows);

        // --- Classifier on the screened offsets ----------------------------
        const fs::path cls_dir = ctx.out / "classify";
        fs::create_directories(cls_dir);
        Eigen::MatrixXd features(static_cast<Eigen::Index>(screened.size()), sub.points);
        Eigen::VectorXd labels(static_cast<Eigen::Index>(screened.size()));
        for (std::size_t i = 0; i < screened.size(); ++i) {
            features.row(static_cast<Eigen::Index>(i)) = screened[i].result.offsets.transpose();
            labels[static_cast<Eigen::Index>(i)] = is_lesion[i] ? 1.0 : 0.0;
        }
        Rng cls_rng = root.split("classify");
        std::vector<MlpConfig> grid;
        for (const auto& hidden : std::vector<std::vector<int>>{{}, {16}}) {
            for (double l2 : {0.0, 1e-3}) {
                MlpConfig cfg_mlp;
                cfg_mlp.hidden = hidden;
                cfg_mlp.l2 = l2;
                cfg_mlp.epochs = node.value("mlp_epochs", 120);
                cfg_mlp.seed = root.split("mlp-init").seed();
                grid.push_back(cfg_mlp);
            }
        }
        const ClassifierReport report = repeated_split_experiment(
            features, labels, node.value("classify_repeats", 5),
            node.value("test_fraction", 0.25), grid, cls_rng);
        write_classifier_report_csv(report, cls_dir / "classify_report.csv");

        // --- Summary --------------------------------------------------------
        std::ofstream md(ctx.out / "summary.md");
        md << "# Synthetic pipeline summary\n\n";
        md << "- shapes: " << n_shapes << ", correspondences: " << sub.points << "\n";
        md << "- dominant mode share: "
           << format_double(sub.eigenvalues[0] / std::max(sub.total_variance, 1e-300)) << "\n";
        md << "- subspace modes (97% rule): " << sub.mode_count() << "\n";
        md << "- screened samples: " << screened.size() << " (controls " << n_controls
           << ", lesions " << n_lesions << ")\n";
        md << "- classifier test accuracy: " << format_double(report.test_accuracy.mean)
           << " +/- " << format_double(report.test_accuracy.std) << " %\n";
        if (report.auc_defined) {
            md << "- classifier test AUC: " << format_double(report.test_auc.mean) << " +/- "
               << format_double(report.test_auc.std) << "\n";
        }
        md << "\nReports: evaluate/, cluster/, landmarks/, screen/, classify/.\n";
    }

    end_run(ctx);
    return ctx.out;
}

int run_command(const std::string& command, const CommandArgs& args) {
    try {
        if (command == "synth") {
            cmd_synth(args);
        } else if (command == "evaluate") {
            cmd_evaluate(args);
        } else if (command == "cluster") {
            cmd_cluster(args);
        } else if (command == "infer-landmarks") {
            cmd_infer_landmarks(args);
        } else if (command == "screen") {
            cmd_screen(args);
        } else if (command == "classify") {
            cmd_classify(args);
        } else if (command == "repro") {
            cmd_repro(args);
        } else {
            std::cerr << "unknown command: " << command << "\n";
            return 1;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace ssm::pipeline
