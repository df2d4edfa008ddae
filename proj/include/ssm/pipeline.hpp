#ifndef SSM_PIPELINE_HPP
#define SSM_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssm::pipeline {

// Command implementations behind the ssm-bench CLI. Each takes a parsed JSON
// config (see README for the schema), writes its reports under the output
// directory, and throws ConfigError / DataError / NumericalError for the
// 1 / 2 / 3 exit codes.
//
// Determinism contract: identical config + seed produce byte-identical
// numeric outputs. Wall-clock information only ever goes to the sidecar
// run.log.

struct CommandArgs {
    std::filesystem::path config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::filesystem::path> out_override;
};

int run_command(const std::string& command, const CommandArgs& args);

// Individual commands, callable in-process (the acceptance suite drives them
// directly). Each returns the resolved output directory.
std::filesystem::path cmd_synth(const CommandArgs& args);
std::filesystem::path cmd_evaluate(const CommandArgs& args);
std::filesystem::path cmd_cluster(const CommandArgs& args);
std::filesystem::path cmd_infer_landmarks(const CommandArgs& args);
std::filesystem::path cmd_screen(const CommandArgs& args);
std::filesystem::path cmd_classify(const CommandArgs& args);
std::filesystem::path cmd_repro(const CommandArgs& args);

// 64-bit FNV-1a over a file's bytes, hex encoded; used by the manifests.
std::string file_hash(const std::filesystem::path& path);

} // namespace ssm::pipeline

#endif
