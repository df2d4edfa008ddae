#include <doctest.h>

#include "ssm/io.hpp"
#include "ssm/pca.hpp"
#include "ssm/pipeline.hpp"
#include "ssm/synthetic.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ssm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ssm_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SSM_BENCH_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small synth config: 4 shapes, coarse grids, fast everywhere.
std::string small_synth_config(const fs::path& out, bool with_seed = true,
                               bool with_outlier = false) {
    std::ostringstream os;
    os << "{\n";
    if (with_seed) os << "  \"seed\": 99,\n";
    os << "  \"out\": \"" << out.string() << "\",\n";
    os << "  \"synth\": {\"n_shapes\": 4, \"sampling_density\": 4, \"grid_resolution\": 24";
    if (with_outlier) os << ", \"outlier\": {\"height\": 3.0}";
    os << "}\n}\n";
    return os.str();
}

} // namespace

TEST_CASE("synth command writes the dataset and an identical manifest on rerun") {
    const fs::path root = fresh_dir("synth");
    const fs::path cfg = root / "config.json";
    write_text(cfg, small_synth_config(root / "out1"));
    REQUIRE(run_cli("synth --config " + cfg.string()) == 0);
    CHECK(fs::exists(root / "out1" / "shape_000.pts"));
    CHECK(fs::exists(root / "out1" / "shape_003.sdt"));
    CHECK(fs::exists(root / "out1" / "shape_000.lmk"));
    CHECK(fs::exists(root / "out1" / "latents.csv"));
    CHECK(fs::exists(root / "out1" / "manifest.json"));
    CHECK_FALSE(fs::exists(root / "out1" / "RUN_IN_PROGRESS"));

    // Same seed into a second directory: identical content hashes.
    const fs::path cfg2 = root / "config2.json";
    write_text(cfg2, small_synth_config(root / "out2"));
    REQUIRE(run_cli("synth --config " + cfg2.string()) == 0);
    auto strip_paths = [](std::string s) { return s; };
    CHECK(strip_paths(slurp(root / "out1" / "manifest.json")) ==
          strip_paths(slurp(root / "out2" / "manifest.json")));
}

TEST_CASE("a missing seed is a config validation error") {
    const fs::path root = fresh_dir("noseed");
    const fs::path cfg = root / "config.json";
    write_text(cfg, small_synth_config(root / "out", /*with_seed=*/false));
    CHECK(run_cli("synth --config " + cfg.string()) == 1);
    SUBCASE("--seed on the command line fixes it") {
        CHECK(run_cli("synth --config " + cfg.string() + " --seed 7") == 0);
    }
}

TEST_CASE("evaluate command") {
    const fs::path root = fresh_dir("evaluate");
    SUBCASE("identical shapes yield an all-zero compactness column") {
        Rng rng(40);
        PointSet p;
        p.pts.resize(9, 3);
        for (Eigen::Index i = 0; i < 9; ++i) {
            for (int j = 0; j < 3; ++j) p.pts(i, j) = 5.0 * rng.normal();
        }
        for (int i = 0; i < 4; ++i) {
            save_point_set(p, root / ("s" + std::to_string(i) + ".pts"));
        }
        std::ostringstream cfg;
        cfg << "{\"seed\": 5, \"out\": \"" << (root / "out").string()
            << "\", \"evaluate\": {\"name\": \"flat\", \"points_dir\": \"" << root.string()
            << "\", \"k_max\": 2, \"specificity_samples\": 20, \"align\": false}}";
        write_text(root / "config.json", cfg.str());
        REQUIRE(run_cli("evaluate --config " + (root / "config.json").string()) == 0);
        const std::string csv = slurp(root / "out" / "metrics_flat.csv");
        std::istringstream lines(csv);
        std::string line;
        std::getline(lines, line); // header
        while (std::getline(lines, line)) {
            const auto first_comma = line.find(',');
            const auto second_comma = line.find(',', first_comma + 1);
            const double compact =
                std::stod(line.substr(first_comma + 1, second_comma - first_comma - 1));
            CHECK(compact == 0.0);
        }
    }
    SUBCASE("a malformed point file fails with exit 2 and the filename") {
        const fs::path bad = root / "bad.pts";
        write_text(bad, "1 2 3\n4 x 6\n");
        std::ostringstream cfg;
        cfg << "{\"seed\": 5, \"out\": \"" << (root / "out2").string()
            << "\", \"evaluate\": {\"points\": [\"" << bad.string() << "\", \"" << bad.string()
            << "\", \"" << bad.string() << "\"]}}";
        write_text(root / "config_bad.json", cfg.str());
        const std::string cmd = std::string(SSM_BENCH_PATH) + " evaluate --config " +
                                (root / "config_bad.json").string() + " 2> " +
                                (root / "stderr.txt").string() + " > /dev/null";
        const int status = std::system(cmd.c_str());
        CHECK(WEXITSTATUS(status) == 2);
        CHECK(slurp(root / "stderr.txt").find("bad.pts") != std::string::npos);
    }
    SUBCASE("fewer than three shapes is a data error") {
        PointSet p;
        p.pts = Eigen::MatrixXd::Random(6, 3);
        const fs::path two = fresh_dir("evaluate_two");
        save_point_set(p, two / "a.pts");
        save_point_set(p, two / "b.pts");
        std::ostringstream cfg;
        cfg << "{\"seed\": 5, \"out\": \"" << (two / "out").string()
            << "\", \"evaluate\": {\"points_dir\": \"" << two.string() << "\"}}";
        write_text(two / "config.json", cfg.str());
        CHECK(run_cli("evaluate --config " + (two / "config.json").string()) == 2);
    }
}

TEST_CASE("screen command flags a control-like sample") {
    const fs::path root = fresh_dir("screen");
    BoxBumpSpec spec;
    spec.sampling_density = 4;
    spec.grid_resolution = 32;
    const BoxBumpEnsemble data = generate_box_bump_ensemble(spec, 6);
    for (std::size_t n = 0; n < data.ensemble.shapes.size(); ++n) {
        save_point_set(data.ensemble.shapes[n], root / ("train" + std::to_string(n) + ".pts"));
    }
    // Sample: the projection of a training shape back onto the subspace, so
    // it is an exact subspace member in the mean frame.
    const PcaSubspace sub = fit_pca(data.ensemble, ModeRule::variance(0.97));
    const ShapeVector member = reconstruct(sub, project(sub, data.ensemble.shape_vector(2)));
    save_point_set(unflatten(member, 3), root / "sample.pts");
    save_volume(box_bump_sdt(spec, 0.5, nullptr), root / "sample.sdt");

    std::ostringstream cfg;
    cfg << "{\"seed\": 3, \"out\": \"" << (root / "out").string() << "\", \"screen\": {"
        << "\"points\": [";
    for (std::size_t n = 0; n < data.ensemble.shapes.size(); ++n) {
        if (n) cfg << ", ";
        cfg << "\"" << (root / ("train" + std::to_string(n) + ".pts")).string() << "\"";
    }
    cfg << "], \"samples\": [{\"name\": \"member\", \"points\": \""
        << (root / "sample.pts").string() << "\", \"sdt\": \"" << (root / "sample.sdt").string()
        << "\"}], \"align\": false, \"lambda\": 0.75}}";
    write_text(root / "config.json", cfg.str());
    REQUIRE(run_cli("screen --config " + (root / "config.json").string()) == 0);

    const std::string report = slurp(root / "out" / "screen_report.csv");
    // control_like is the last column of the member row
    std::istringstream lines(report);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(row.substr(row.rfind(',') + 1) == "1");
    CHECK(fs::exists(root / "out" / "offsets_member.csv"));
    CHECK(fs::exists(root / "out" / "energy_member.csv"));
    CHECK(fs::exists(root / "out" / "recon_member.pts"));

    SUBCASE("an SDT that misses the shape exits with the numerical code") {
        ScalarVolume tiny;
        tiny.dims = {8, 8, 8};
        tiny.origin = {-1, -1, -1};
        tiny.spacing = {0.25, 0.25, 0.25};
        tiny.values.assign(512, 1.0);
        save_volume(tiny, root / "tiny.sdt");
        std::string broken = cfg.str();
        const std::string key = root / "sample.sdt";
        broken.replace(broken.find(key), key.size(), (root / "tiny.sdt").string());
        write_text(root / "config_broken.json", broken);
        CHECK(run_cli("screen --config " + (root / "config_broken.json").string()) == 3);
    }
}

TEST_CASE("infer-landmarks command with subject equal to the mean reports zero error") {
    const fs::path root = fresh_dir("landmarks");
    Rng rng(4);
    PointSet mean;
    mean.pts.resize(16, 3);
    for (Eigen::Index i = 0; i < 16; ++i) {
        for (int j = 0; j < 3; ++j) mean.pts(i, j) = 10.0 * rng.normal();
    }
    LandmarkSet lm;
    lm.curves["apex"] = Eigen::MatrixXd::Random(2, 3) * 5.0;
    save_point_set(mean, root / "mean.pts");
    save_landmarks(lm, root / "mean.lmk");
    save_point_set(mean, root / "subject.pts");
    save_landmarks(lm, root / "subject_truth.lmk");

    std::ostringstream cfg;
    cfg << "{\"seed\": 8, \"out\": \"" << (root / "out").string()
        << "\", \"infer_landmarks\": {\"mean_points\": \"" << (root / "mean.pts").string()
        << "\", \"mean_landmarks\": \"" << (root / "mean.lmk").string()
        << "\", \"subjects\": [\"" << (root / "subject.pts").string()
        << "\"], \"truth_landmarks\": [\"" << (root / "subject_truth.lmk").string() << "\"]}}";
    write_text(root / "config.json", cfg.str());
    REQUIRE(run_cli("infer-landmarks --config " + (root / "config.json").string()) == 0);
    const std::string errors = slurp(root / "out" / "landmark_errors.csv");
    std::istringstream lines(errors);
    std::string header, row;
    std::getline(lines, header);
    while (std::getline(lines, row)) {
        const double err = std::stod(row.substr(row.rfind(',') + 1));
        CHECK(err < 1e-9);
    }
}

TEST_CASE("classify command consumes offsets files and writes the report") {
    const fs::path root = fresh_dir("classify");
    Rng rng(6);
    auto write_offsets = [&](const fs::path& path, double level) {
        std::ostringstream body;
        body << "point,offset_mm,thresholded_mm\n";
        for (int i = 0; i < 32; ++i) {
            const double v = level + 0.02 * rng.normal();
            body << i << ',' << v << ',' << v << '\n';
        }
        write_text(path, body.str());
    };
    std::ostringstream controls, pathology;
    for (int i = 0; i < 8; ++i) {
        const fs::path c = root / ("c" + std::to_string(i) + ".csv");
        const fs::path p = root / ("p" + std::to_string(i) + ".csv");
        write_offsets(c, 0.0);
        write_offsets(p, 1.0);
        controls << (i ? ", " : "") << '"' << c.string() << '"';
        pathology << (i ? ", " : "") << '"' << p.string() << '"';
    }
    std::ostringstream cfg;
    cfg << "{\"seed\": 11, \"out\": \"" << (root / "out").string()
        << "\", \"classify\": {\"control_offsets\": [" << controls.str()
        << "], \"pathology_offsets\": [" << pathology.str()
        << "], \"repeats\": 2, \"test_fraction\": 0.25}}";
    write_text(root / "config.json", cfg.str());
    REQUIRE(run_cli("classify --config " + (root / "config.json").string()) == 0);
    const std::string report = slurp(root / "out" / "classify_report.csv");
    CHECK(report.find("accuracy_pct,100,0,100,0") != std::string::npos);
}

TEST_CASE("unknown command and bad config exit with the usage code") {
    CHECK(run_cli("synth --config /nonexistent/config.json") == 1);
    const fs::path root = fresh_dir("badjson");
    write_text(root / "config.json", "{ not json");
    CHECK(run_cli("synth --config " + (root / "config.json").string()) == 1);
}
