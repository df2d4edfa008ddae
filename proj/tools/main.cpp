#include "ssm/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"ssm-bench: shape-model evaluation, landmark inference, and lesion screening"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "Generate the synthetic box-bump dataset (points, SDTs, truth)"},
        {"evaluate", "Compactness / generalization / specificity curves"},
        {"cluster", "Elbow curves, k-means/k-medoids labels, cluster mean shapes"},
        {"infer-landmarks", "TPS landmark transfer and validation reports"},
        {"screen", "Slack-variable lesion screening against a controls model"},
        {"classify", "Offsets-based control/pathology MLP classification"},
        {"repro", "Full synthetic pipeline end to end"},
    };

    struct Parsed {
        std::string config;
        std::uint64_t seed = 0;
        bool seed_set = false;
        std::string out;
    };
    std::map<std::string, Parsed> parsed;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        Parsed& p = parsed[name];
        sub->add_option("--config", p.config, "JSON config file")->required();
        sub->add_option("--seed", p.seed, "Root seed (overrides the config)")
            ->each([&p](const std::string&) { p.seed_set = true; });
        sub->add_option("--out", p.out, "Output directory (overrides the config)");
    }

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    const Parsed& p = parsed[name];
    ssm::pipeline::CommandArgs args;
    args.config_path = p.config;
    if (p.seed_set) {
        args.seed_override = p.seed;
    }
    if (!p.out.empty()) {
        args.out_override = p.out;
    }
    return ssm::pipeline::run_command(name, args);
}
