#include "hhsae/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "hhsae/config.hpp"
#include "hhsae/data.hpp"
#include "hhsae/discovery.hpp"
#include "hhsae/evaluation.hpp"
#include "hhsae/synthesis.hpp"
#include "hhsae/tensor_io.hpp"
#include "hhsae/trainer.hpp"

namespace hhsae {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_blob_sha1(const std::string& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha1 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

namespace {

// Paths inside a run directory.
struct RunPaths {
    fs::path root;
    fs::path raw_csv() const { return root / "data" / "raw.csv"; }
    fs::path ground_truth() const { return root / "data" / "ground_truth.json"; }
    fs::path train_csv() const { return root / "data" / "train.csv"; }
    fs::path test_csv() const { return root / "data" / "test.csv"; }
    fs::path stats() const { return root / "data" / "preprocess.json"; }
    fs::path checkpoint() const { return root / "checkpoint.hhsae"; }
    fs::path ablated_checkpoint() const { return root / "ablated_checkpoint.hhsae"; }
    fs::path modules() const { return root / "reports" / "modules.json"; }
    fs::path report(const std::string& name) const { return root / "reports" / name; }
    fs::path steered_csv() const { return root / "synthetic" / "steered.csv"; }
    fs::path steered_manifest() const { return root / "synthetic" / "steered_manifest.json"; }
    fs::path manifest() const { return root / "manifest.json"; }
};

void require_file(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
        throw MissingArtifact("missing upstream artifact " + p.string() + " (run '" + producer + "' first)");
}

// Tracks what a command read and wrote for the manifest.
struct Context {
    RunConfig cfg;
    RunPaths paths;
    std::ostream& out;
    std::vector<fs::path> inputs, outputs;

    std::string read(const fs::path& p) {
        inputs.push_back(p);
        return read_file(p);
    }
    void wrote(const fs::path& p) { outputs.push_back(p); }
    void write_text(const fs::path& p, const std::string& text) {
        write_file(p, text);
        wrote(p);
    }
    void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }
};

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream s;
    for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
    s << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) s << (i ? "," : "") << r[i];
        s << '\n';
    }
    return s.str();
}

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

// --- shared loaders -------------------------------------------------------------

struct Splits {
    PreprocessStats stats;
    Dataset train_raw, test_raw, train, test;
};

void cmd_preprocess(Context& c);

Splits load_splits(Context& c) {
    require_file(c.paths.stats(), "preprocess");
    require_file(c.paths.train_csv(), "preprocess");
    require_file(c.paths.test_csv(), "preprocess");
    Splits s;
    s.stats = PreprocessStats::from_json(c.read(c.paths.stats()));
    c.inputs.push_back(c.paths.train_csv());
    c.inputs.push_back(c.paths.test_csv());
    s.train_raw = load_csv(c.paths.train_csv(), c.cfg.data.label_column);
    s.test_raw = load_csv(c.paths.test_csv(), c.cfg.data.label_column);
    // Kinds come from the stats so a split that happens to look binary stays continuous.
    for (auto* d : {&s.train_raw, &s.test_raw})
        for (std::size_t f = 0; f < d->d() && f < s.stats.features.size(); ++f)
            d->feature_kinds[f] = s.stats.features[f].kind;
    s.train = preprocess_apply(s.train_raw, s.stats);
    s.test = preprocess_apply(s.test_raw, s.stats);
    return s;
}

Checkpoint load_model(Context& c) {
    require_file(c.paths.checkpoint(), "train");
    c.inputs.push_back(c.paths.checkpoint());
    return load_checkpoint(c.paths.checkpoint());
}

Dataset cohort_of(const Dataset& d, const std::string& rule) {
    return rule == "all" ? d : d.with_label(1);
}

// --- commands -------------------------------------------------------------------

void cmd_synthgen(Context& c) {
    ManifoldConfig mc = c.cfg.data.synthetic;
    mc.rng_seed = c.cfg.seed;
    auto [data, truth] = generate_synthetic_manifold(mc);
    write_csv(data, c.paths.raw_csv(), c.cfg.data.label_column);
    c.wrote(c.paths.raw_csv());
    truth.save(c.paths.ground_truth());
    c.wrote(c.paths.ground_truth());
    c.wrote(fs::path(c.paths.ground_truth().string() + ".bin"));
    c.out << "synthgen: " << data.n() << " samples, " << data.positives() << " positive\n";
}

void cmd_preprocess(Context& c) {
    fs::path source = c.cfg.data.csv_path.empty() ? c.paths.raw_csv() : fs::path(c.cfg.data.csv_path);
    require_file(source, c.cfg.data.csv_path.empty() ? "synthgen" : "data.csv_path");
    c.inputs.push_back(source);
    const Dataset raw = load_csv(source, c.cfg.data.label_column);
    auto [train, test] = stratified_split(raw, c.cfg.data.train_fraction, c.cfg.seed);
    const std::set<std::string> logs(c.cfg.data.log_features.begin(), c.cfg.data.log_features.end());
    const auto stats = preprocess_fit(train, {c.cfg.data.clip_lo, c.cfg.data.clip_hi}, logs);
    write_csv(train, c.paths.train_csv(), c.cfg.data.label_column);
    write_csv(test, c.paths.test_csv(), c.cfg.data.label_column);
    c.wrote(c.paths.train_csv());
    c.wrote(c.paths.test_csv());
    c.write_text(c.paths.stats(), stats.to_json());
    c.out << "preprocess: " << train.n() << " train / " << test.n() << " test rows\n";
}

void cmd_train(Context& c) {
    if (!fs::exists(c.paths.stats())) cmd_preprocess(c);
    const auto s = load_splits(c);
    const auto tc = c.cfg.train_config(s.train.d());
    auto result = train(s.train, tc);

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : result.reports)
        rows.push_back({num(r.epoch), num(r.lr_used), num(r.loss.total), num(r.loss.recon), num(r.loss.smooth),
                        num(r.loss.dir), num(r.loss.mag), num(r.loss.tax1), num(r.loss.tax2),
                        num(r.dead_feature_ratio_L1), num(r.dead_feature_ratio_L2), num(r.active_fraction_L1),
                        num(r.active_fraction_L2), num(r.energy_L1), num(r.energy_L2), num(r.mse_pos),
                        num(r.mse_neg)});
    c.write_text(c.paths.report("train_epochs.csv"),
                 csv_table({"epoch", "lr", "total", "recon", "smooth", "dir", "mag", "tax1", "tax2", "dead_L1",
                            "dead_L2", "active_L1", "active_L2", "energy_L1", "energy_L2", "mse_pos", "mse_neg"},
                           rows));
    save_checkpoint(result.params, &s.stats, c.paths.checkpoint(), to_json(c.cfg));
    c.wrote(c.paths.checkpoint());
    if (result.diverged) throw Error("training diverged (last good epoch kept in checkpoint): " + result.message);
    const auto& last = result.reports.back();
    c.out << "train: " << result.reports.size() << " epochs, final loss " << last.loss.total << "\n";
}

json diagnostics_json(const EpochReport& r) {
    return {{"dead_feature_ratio_L1", r.dead_feature_ratio_L1},
            {"dead_feature_ratio_L2", r.dead_feature_ratio_L2},
            {"active_fraction_L1", r.active_fraction_L1},
            {"active_fraction_L2", r.active_fraction_L2},
            {"energy_L1", r.energy_L1},
            {"energy_L2", r.energy_L2},
            {"mse_pos", r.mse_pos},
            {"mse_neg", r.mse_neg},
            {"loss", {{"total", r.loss.total}, {"recon", r.loss.recon}, {"smooth", r.loss.smooth},
                      {"dir", r.loss.dir}, {"mag", r.loss.mag}, {"tax1", r.loss.tax1}, {"tax2", r.loss.tax2}}}};
}

void cmd_inspect(Context& c) {
    const auto ck = load_model(c);
    const auto s = load_splits(c);
    const json report = {{"dims", dims_to_json(ck.params.dims)},
                         {"train", diagnostics_json(diagnose(ck.params, s.train))},
                         {"test", diagnostics_json(diagnose(ck.params, s.test))}};
    c.write_json(c.paths.report("inspect.json"), report);
    c.out << report.dump(2) << "\n";
}

struct Discovery {
    Dataset cohort;
    ModuleDetection detection;
};

void cmd_discover(Context& c) {
    const auto ck = load_model(c);
    const auto s = load_splits(c);
    const Dataset cohort = cohort_of(s.train, c.cfg.discovery.cohort);
    if (cohort.n() == 0) throw Error("discover: cohort '" + c.cfg.discovery.cohort + "' is empty");
    const Matrix z2 = full_forward(cohort.X, ck.params).z2;
    const auto aff = affinity_from_codes(z2);
    auto det = detect_modules(aff, c.cfg.discovery.resolution, c.cfg.seed);
    for (auto& m : det.modules) m = module_metrics(m, ck.params, z2, c.cfg.discovery.theta_atom);

    json modules = json::array();
    for (const auto& m : det.modules) modules.push_back(to_json(m));
    c.write_json(c.paths.modules(), {{"cohort", c.cfg.discovery.cohort},
                                     {"cohort_size", aff.cohort_size},
                                     {"resolution", c.cfg.discovery.resolution},
                                     {"modularity", det.modularity},
                                     {"warning", det.warning},
                                     {"modules", modules}});

    json profiles = json::array();
    for (std::size_t j = 0; j < ck.params.dims.d2; ++j)
        profiles.push_back(to_json(semantic_profile(ck.params, j, c.cfg.discovery.top_n, s.train.feature_names)));
    c.write_json(c.paths.report("profiles.json"), profiles);

    std::vector<std::string> header;
    for (std::size_t j = 0; j < aff.A.cols(); ++j) header.push_back("n" + std::to_string(j));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < aff.A.rows(); ++i) {
        rows.emplace_back();
        for (std::size_t j = 0; j < aff.A.cols(); ++j) rows.back().push_back(num(aff.A(i, j)));
    }
    c.write_text(c.paths.report("affinity.csv"), csv_table(header, rows));

    const auto dom = dominant_modules(full_forward(s.train.X, ck.params).z2, det.modules);
    rows.clear();
    for (std::size_t i = 0; i < dom.size(); ++i)
        rows.push_back({num(i), std::to_string(s.train.y[i]), std::to_string(dom[i])});
    c.write_text(c.paths.report("cluster_assignments.csv"), csv_table({"sample", "label", "module"}, rows));

    c.out << "discover: " << det.modules.size() << " modules on a cohort of " << aff.cohort_size << "\n";
    if (!det.warning.empty()) c.out << "warning: " << det.warning << "\n";
}

std::vector<ConceptModule> load_modules(Context& c) {
    require_file(c.paths.modules(), "discover");
    const json j = json::parse(c.read(c.paths.modules()));
    std::vector<ConceptModule> out;
    for (const auto& m : j.at("modules")) out.push_back(module_from_json(m));
    return out;
}

void cmd_steer(Context& c) {
    const auto ck = load_model(c);
    const auto s = load_splits(c);
    const auto modules = load_modules(c);
    if (modules.empty()) throw Error("steer: discovery found no modules");

    const Dataset rare = s.train.with_label(1), background = s.train.with_label(0);
    std::vector<std::vector<double>> betas;
    for (const auto& m : modules) betas.push_back(derive_bias_profile(ck.params, rare, background, m));
    std::size_t pick;
    if (c.cfg.synthesis.module >= 0) {
        pick = static_cast<std::size_t>(c.cfg.synthesis.module);
        if (pick >= modules.size())
            throw ConfigError("synthesis.module: no module " + std::to_string(pick) + " (found " +
                              std::to_string(modules.size()) + ")");
    } else {
        pick = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < modules.size(); ++i) {
            double mass = 0.0;
            for (double b : betas[i]) mass += b;
            if (mass > best) {
                best = mass;
                pick = i;
            }
        }
    }

    SteeringSpec spec;
    spec.module = modules[pick];
    spec.beta = betas[pick];
    spec.alpha_range = {c.cfg.synthesis.alpha_lo, c.cfg.synthesis.alpha_hi};
    spec.n_samples = c.cfg.synthesis.n_samples
                         ? c.cfg.synthesis.n_samples
                         : static_cast<std::size_t>(std::ceil(c.cfg.eval.synthetic_ratio *
                                                              static_cast<double>(rare.n())));
    spec.rng_seed = c.cfg.seed;

    const Matrix z2_all = full_forward(s.train.X, ck.params).z2;
    std::vector<bool> live(ck.params.dims.d2, false);
    for (std::size_t b = 0; b < z2_all.rows(); ++b)
        for (std::size_t j = 0; j < z2_all.cols(); ++j) live[j] = live[j] || z2_all(b, j) != 0.0;

    const auto result = synthesize(ck.params, spec, CarrierStats::from_data(s.train.X),
                                   SnapBounds::from_training(s.train, s.stats), s.train.feature_names, &live);
    Dataset raw = result.data;
    raw.X = inverse_transform(result.data.X, s.stats);
    write_csv(raw, c.paths.steered_csv(), c.cfg.data.label_column);
    c.wrote(c.paths.steered_csv());
    c.write_json(c.paths.steered_manifest(), {{"spec", to_json(spec)}, {"seed", c.cfg.seed},
                                              {"module_id", spec.module.module_id}, {"alphas", result.alphas}});
    c.out << "steer: " << spec.n_samples << " samples from module " << spec.module.module_id << "\n";
}

ProbeOptions probe_options(const RunConfig& cfg) { return {cfg.eval.folds, cfg.eval.l2_reg, cfg.seed}; }

std::vector<std::string> probe_row(const ProbeReport& r) {
    return {r.tier, num(r.auc), num(r.auc_sd), num(r.gain_vs_L0), num(r.fold_count)};
}

void cmd_probe(Context& c) {
    const auto ck = load_model(c);
    const auto s = load_splits(c);
    const auto rep = hierarchical_utility_report(ck.params, s.test, probe_options(c.cfg));
    std::vector<std::vector<std::string>> rows;
    for (const auto& t : rep.tiers) rows.push_back(probe_row(t));
    c.write_text(c.paths.report("probe.csv"), csv_table({"tier", "auc", "auc_sd", "gain_vs_L0", "folds"}, rows));
    c.write_json(c.paths.report("probe.json"), to_json(rep));
    for (const auto& t : rep.tiers) c.out << std::left << std::setw(8) << t.tier << " auc " << t.auc << " ± " << t.auc_sd << "\n";
    c.out << "denoising delta " << rep.denoising_delta << "\n";
}

void cmd_ablate(Context& c) {
    const auto ck = load_model(c);
    const auto s = load_splits(c);
    const auto rep = ablation_report(ck.params, s.train, s.test, c.cfg.train_config(s.train.d()), probe_options(c.cfg));
    save_checkpoint(rep.ablated_model, &s.stats, c.paths.ablated_checkpoint(), to_json(c.cfg));
    c.wrote(c.paths.ablated_checkpoint());
    std::vector<std::vector<std::string>> rows;
    for (const auto& [label, u] : {std::pair{"full", &rep.full}, std::pair{"sparse_only", &rep.ablated}})
        for (const auto& t : u->tiers) {
            rows.push_back({label});
            for (auto& cell : probe_row(t)) rows.back().push_back(cell);
        }
    c.write_text(c.paths.report("ablation.csv"),
                 csv_table({"model", "tier", "auc", "auc_sd", "gain_vs_L0", "folds"}, rows));
    c.write_json(c.paths.report("ablation.json"),
                 {{"full", to_json(rep.full)}, {"sparse_only", to_json(rep.ablated)}, {"gap", rep.gap}});
    c.out << "ablate: full AUC(L0+f1) - sparse-only AUC(f1+f2) = " << rep.gap << "\n";
}

void cmd_augment_eval(Context& c) {
    const auto s = load_splits(c);
    require_file(c.paths.steered_csv(), "steer");
    c.inputs.push_back(c.paths.steered_csv());
    Dataset synth_raw = load_csv(c.paths.steered_csv(), c.cfg.data.label_column);
    synth_raw.feature_kinds = s.train_raw.feature_kinds;
    const Dataset synth = preprocess_apply(synth_raw, s.stats);

    AugmentationOptions opts;
    opts.n_runs = c.cfg.eval.runs;
    opts.subsample = c.cfg.eval.subsample;
    opts.synthetic_ratio = c.cfg.eval.synthetic_ratio;
    opts.l2_reg = c.cfg.eval.augment_l2_reg;
    opts.spec_target = c.cfg.eval.spec_target;
    opts.rng_seed = c.cfg.seed;
    const auto res = augmentation_experiment(s.train, s.test, synth, opts, "steered");

    std::vector<std::vector<std::string>> rows;
    for (const auto* r : {&res.baseline, &res.augmented})
        rows.push_back({r->method, num(r->auc.mean), num(r->auc.sd), num(r->auprc.mean), num(r->auprc.sd),
                        num(r->recall_at_spec.mean), num(r->recall_at_spec.sd), num(r->best_f1.mean),
                        num(r->best_f1.sd), num(r->delta_prc_relative)});
    c.write_text(c.paths.report("augmentation.csv"),
                 csv_table({"method", "auc", "auc_sd", "auprc", "auprc_sd", "recall_at_spec", "recall_at_spec_sd",
                            "best_f1", "best_f1_sd", "delta_prc_relative"},
                           rows));
    c.write_json(c.paths.report("augmentation.json"), {{"baseline", to_json(res.baseline)},
                                                       {"augmented", to_json(res.augmented)},
                                                       {"run_delta_prc", res.run_delta_prc}});
    c.out << "augment-eval: AUPRC " << res.baseline.auprc.mean << " -> " << res.augmented.auprc.mean
          << " (relative " << res.augmented.delta_prc_relative << ")\n";
}

const std::map<std::string, std::function<void(Context&)>>& command_table() {
    static const std::map<std::string, std::function<void(Context&)>> t = {
        {"synthgen", cmd_synthgen}, {"preprocess", cmd_preprocess}, {"train", cmd_train},
        {"inspect", cmd_inspect},   {"discover", cmd_discover},     {"steer", cmd_steer},
        {"probe", cmd_probe},       {"ablate", cmd_ablate},         {"augment-eval", cmd_augment_eval},
    };
    return t;
}

std::string relative_to(const fs::path& p, const fs::path& root) {
    const auto rel = p.lexically_relative(root);
    return (rel.empty() || *rel.begin() == "..") ? p.generic_string() : rel.generic_string();
}

json file_list(const std::vector<fs::path>& files, const fs::path& root) {
    std::map<std::string, std::string> unique;
    for (const auto& f : files)
        if (fs::exists(f)) unique[relative_to(f, root)] = git_blob_sha1(read_file(f));
    json out = json::array();
    for (const auto& [path, sha] : unique) out.push_back({{"path", path}, {"sha1", sha}});
    return out;
}

void write_manifest(const Context& c, const std::string& command, double wall_seconds) {
    json manifest = json::object();
    if (fs::exists(c.paths.manifest())) {
        manifest = json::parse(read_file(c.paths.manifest()), nullptr, false);
        if (manifest.is_discarded() || !manifest.is_object()) manifest = json::object();
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream stamp;
    stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    manifest["commands"][command] = {{"config", to_json(c.cfg)},
                                     {"seed", c.cfg.seed},
                                     {"inputs", file_list(c.inputs, c.paths.root)},
                                     {"outputs", file_list(c.outputs, c.paths.root)},
                                     {"wall_time_s", wall_seconds},
                                     {"finished_at", stamp.str()}};
    write_file(c.paths.manifest(), manifest.dump(2) + "\n");
}

void print_error(std::ostream& err, const std::string& command, const std::string& kind, const std::string& msg) {
    err << json{{"error", {{"command", command}, {"kind", kind}, {"message", msg}}}}.dump() << "\n";
}

}  // namespace

int run(const std::string& command, const CliOptions& opts, std::ostream& out, std::ostream& err) {
    const auto& table = command_table();
    const auto it = table.find(command);
    if (it == table.end()) {
        print_error(err, command, "usage", "unknown command '" + command + "'");
        return 2;
    }
    try {
        auto overrides = opts.overrides;
        if (opts.seed) overrides.push_back("seed=" + std::to_string(*opts.seed));
        RunConfig cfg = load_run_config(opts.config_path, overrides);

        fs::path root = opts.run_dir;
        if (root.empty()) {
            const char* env = std::getenv("HHSAE_RUN_DIR");
            root = env && *env ? fs::path(env) : fs::path("runs") / "default";
        }
        fs::create_directories(root);
        Context ctx{std::move(cfg), RunPaths{root}, out, {}, {}};
        if (!opts.config_path.empty()) ctx.inputs.push_back(opts.config_path);

        const auto t0 = std::chrono::steady_clock::now();
        it->second(ctx);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(ctx, command, wall);
        return 0;
    } catch (const ConfigError& e) {
        print_error(err, command, "config", e.what());
        return 2;
    } catch (const MissingArtifact& e) {
        print_error(err, command, "missing_artifact", e.what());
        return 3;
    } catch (const std::exception& e) {
        print_error(err, command, "runtime", e.what());
        return 1;
    }
}

}  // namespace hhsae
