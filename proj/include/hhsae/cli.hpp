#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hhsae/numerics.hpp"

namespace hhsae {

// An upstream artifact the command needs is absent.
struct MissingArtifact : Error {
    using Error::Error;
};

struct CliOptions {
    std::filesystem::path config_path;      // empty: all defaults
    std::vector<std::string> overrides;     // "a.b=value", applied in order
    std::filesystem::path run_dir;          // empty: $HHSAE_RUN_DIR, else runs/default
    std::optional<std::uint64_t> seed;      // replaces config "seed"
};

inline const std::vector<std::string>& cli_commands() {
    static const std::vector<std::string> c = {"synthgen", "preprocess", "train",   "inspect",     "discover",
                                               "steer",    "probe",      "ablate",  "augment-eval"};
    return c;
}

// Exit codes: 0 ok, 1 runtime failure, 2 bad config or usage, 3 missing
// upstream artifact. Failures print {"error": {...}} to err.
int run(const std::string& command, const CliOptions& opts, std::ostream& out, std::ostream& err);

// git-style object id: sha1("blob <size>\0" + bytes), lowercase hex.
std::string git_blob_sha1(const std::string& bytes);

}  // namespace hhsae
