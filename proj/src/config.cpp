#include "hhsae/config.hpp"

#include <fstream>
#include <sstream>

namespace hhsae {

using nlohmann::json;

RunConfig default_run_config() { return RunConfig{}; }

TrainConfig RunConfig::train_config(std::size_t D) const {
    TrainConfig t = train;
    t.dims = model;
    t.dims.D = D;
    t.loss = loss;
    t.rng_seed = seed;
    t.validate();
    return t;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (!(data.clip_lo >= 0.0 && data.clip_lo < data.clip_hi && data.clip_hi <= 1.0))
        fail("data.clip_lo/clip_hi", "require 0 <= clip_lo < clip_hi <= 1");
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) fail("data.train_fraction", "must be in (0, 1)");
    if (data.label_column.empty()) fail("data.label_column", "must not be empty");
    try {
        data.synthetic.validate();
    } catch (const Error& e) {
        fail("data.synthetic", e.what());
    }
    if (model.k1 == 0 || model.k1 > model.d1) fail("model.k1", "require 1 <= k1 <= d1");
    if (model.k2 == 0 || model.k2 > model.d2) fail("model.k2", "require 1 <= k2 <= d2");
    if (model.d2 >= model.d1) fail("model.d2", "require d2 < d1");
    if (train.epochs == 0) fail("train.epochs", "must be >= 1");
    if (train.batch_size == 0) fail("train.batch_size", "must be >= 1");
    if (!(train.lr >= 0.0)) fail("train.lr", "must be >= 0");
    if (!(train.lr_decay_gamma > 0.0 && train.lr_decay_gamma <= 1.0)) fail("train.lr_decay_gamma", "must be in (0, 1]");
    try {
        loss.validate();
    } catch (const Error& e) {
        fail("loss", e.what());
    }
    if (!(discovery.resolution > 0.0)) fail("discovery.resolution", "must be positive");
    if (!(discovery.theta_atom >= 0.0 && discovery.theta_atom < 1.0)) fail("discovery.theta_atom", "must be in [0, 1)");
    if (discovery.cohort != "positives" && discovery.cohort != "all")
        fail("discovery.cohort", "must be \"positives\" or \"all\"");
    if (synthesis.module < -1) fail("synthesis.module", "must be -1 (auto) or a module id");
    if (!(synthesis.alpha_lo <= synthesis.alpha_hi)) fail("synthesis.alpha_lo", "must not exceed alpha_hi");
    if (eval.folds < 2) fail("eval.folds", "must be >= 2");
    if (eval.runs == 0) fail("eval.runs", "must be >= 1");
    if (!(eval.spec_target > 0.0 && eval.spec_target < 1.0)) fail("eval.spec_target", "must be in (0, 1)");
    if (!(eval.l2_reg >= 0.0)) fail("eval.l2_reg", "must be >= 0");
    if (!(eval.augment_l2_reg >= 0.0)) fail("eval.augment_l2_reg", "must be >= 0");
    if (!(eval.synthetic_ratio >= 0.0)) fail("eval.synthetic_ratio", "must be >= 0");
    if (!(eval.subsample > 0.0 && eval.subsample <= 1.0)) fail("eval.subsample", "must be in (0, 1]");
}

json to_json(const RunConfig& c) {
    const auto& s = c.data.synthetic;
    return {
        {"seed", c.seed},
        {"data",
         {{"csv_path", c.data.csv_path},
          {"label_column", c.data.label_column},
          {"clip_lo", c.data.clip_lo},
          {"clip_hi", c.data.clip_hi},
          {"log_features", c.data.log_features},
          {"train_fraction", c.data.train_fraction},
          {"synthetic",
           {{"n", s.n},
            {"D", s.D},
            {"r", s.r},
            {"m", s.m},
            {"n_motifs", s.n_motifs},
            {"atoms_per_motif", s.atoms_per_motif},
            {"n_positive_motifs", s.n_positive_motifs},
            {"prevalence", s.prevalence},
            {"noise_std", s.noise_std},
            {"context_scale", s.context_scale},
            {"positive_context_shift", s.positive_context_shift},
            {"decoy_rate", s.decoy_rate},
            {"motif_overlap", s.motif_overlap},
            {"background_atoms", s.background_atoms},
            {"coef_lo", s.coef_lo},
            {"coef_hi", s.coef_hi},
            {"coef_jitter", s.coef_jitter}}}}},
        {"model",
         {{"d_dense", c.model.d_dense},
          {"d1", c.model.d1},
          {"k1", c.model.k1},
          {"d2", c.model.d2},
          {"k2", c.model.k2},
          {"dense_enabled", c.model.dense_enabled}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"lr_decay_gamma", c.train.lr_decay_gamma},
          {"weight_decay", c.train.weight_decay},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"eps", c.train.eps}}},
        {"loss",
         {{"lambda_s", c.loss.lambda_s},
          {"alpha", c.loss.alpha},
          {"beta", c.loss.beta},
          {"lambda_1", c.loss.lambda_1},
          {"lambda_2", c.loss.lambda_2},
          {"omega_rare", c.loss.omega_rare}}},
        {"discovery",
         {{"resolution", c.discovery.resolution},
          {"theta_atom", c.discovery.theta_atom},
          {"cohort", c.discovery.cohort},
          {"top_n", c.discovery.top_n}}},
        {"synthesis",
         {{"module", c.synthesis.module},
          {"alpha_lo", c.synthesis.alpha_lo},
          {"alpha_hi", c.synthesis.alpha_hi},
          {"n_samples", c.synthesis.n_samples}}},
        {"eval",
         {{"folds", c.eval.folds},
          {"runs", c.eval.runs},
          {"spec_target", c.eval.spec_target},
          {"l2_reg", c.eval.l2_reg},
          {"augment_l2_reg", c.eval.augment_l2_reg},
          {"synthetic_ratio", c.eval.synthetic_ratio},
          {"subsample", c.eval.subsample}}},
    };
}

namespace {

// Every key of doc must exist in schema; objects recurse, leaves must agree on
// JSON kind (numbers interchangeable where the schema holds a float).
void check_keys(const json& doc, const json& schema, const std::string& path) {
    if (!doc.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!schema.contains(it.key())) throw ConfigError(key + ": unknown key");
        const json& want = schema.at(it.key());
        if (want.is_object()) {
            check_keys(it.value(), want, key);
        } else if (want.is_number_float()) {
            if (!it.value().is_number()) throw ConfigError(key + ": expected a number");
        } else if (want.is_number_unsigned()) {
            if (!it.value().is_number_unsigned() && !(it.value().is_number_integer() && it.value().get<long long>() >= 0))
                throw ConfigError(key + ": expected a non-negative integer");
        } else if (want.is_number_integer()) {
            if (!it.value().is_number_integer()) throw ConfigError(key + ": expected an integer");
        } else if (want.is_boolean()) {
            if (!it.value().is_boolean()) throw ConfigError(key + ": expected true or false");
        } else if (want.is_string()) {
            if (!it.value().is_string()) throw ConfigError(key + ": expected a string");
        } else if (want.is_array()) {
            if (!it.value().is_array()) throw ConfigError(key + ": expected an array");
            for (const auto& e : it.value())
                if (!e.is_string()) throw ConfigError(key + ": expected an array of strings");
        }
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    const RunConfig def = default_run_config();
    const json schema = to_json(def);
    check_keys(j, schema, "");
    json merged = schema;
    merged.merge_patch(j);

    RunConfig c = def;
    c.seed = merged["seed"].get<std::uint64_t>();
    const auto& d = merged["data"];
    c.data.csv_path = d["csv_path"].get<std::string>();
    c.data.label_column = d["label_column"].get<std::string>();
    c.data.clip_lo = d["clip_lo"].get<double>();
    c.data.clip_hi = d["clip_hi"].get<double>();
    c.data.log_features = d["log_features"].get<std::vector<std::string>>();
    c.data.train_fraction = d["train_fraction"].get<double>();
    const auto& s = d["synthetic"];
    auto& ms = c.data.synthetic;
    ms.n = s["n"].get<std::size_t>();
    ms.D = s["D"].get<std::size_t>();
    ms.r = s["r"].get<std::size_t>();
    ms.m = s["m"].get<std::size_t>();
    ms.n_motifs = s["n_motifs"].get<std::size_t>();
    ms.atoms_per_motif = s["atoms_per_motif"].get<std::size_t>();
    ms.n_positive_motifs = s["n_positive_motifs"].get<std::size_t>();
    ms.prevalence = s["prevalence"].get<double>();
    ms.noise_std = s["noise_std"].get<double>();
    ms.context_scale = s["context_scale"].get<double>();
    ms.positive_context_shift = s["positive_context_shift"].get<double>();
    ms.decoy_rate = s["decoy_rate"].get<double>();
    ms.motif_overlap = s["motif_overlap"].get<std::size_t>();
    ms.background_atoms = s["background_atoms"].get<std::size_t>();
    ms.coef_lo = s["coef_lo"].get<double>();
    ms.coef_hi = s["coef_hi"].get<double>();
    ms.coef_jitter = s["coef_jitter"].get<double>();
    ms.rng_seed = c.seed;

    const auto& m = merged["model"];
    c.model.d_dense = m["d_dense"].get<std::size_t>();
    c.model.d1 = m["d1"].get<std::size_t>();
    c.model.k1 = m["k1"].get<std::size_t>();
    c.model.d2 = m["d2"].get<std::size_t>();
    c.model.k2 = m["k2"].get<std::size_t>();
    c.model.dense_enabled = m["dense_enabled"].get<bool>();

    const auto& t = merged["train"];
    c.train.epochs = t["epochs"].get<std::size_t>();
    c.train.batch_size = t["batch_size"].get<std::size_t>();
    c.train.lr = t["lr"].get<double>();
    c.train.lr_decay_gamma = t["lr_decay_gamma"].get<double>();
    c.train.weight_decay = t["weight_decay"].get<double>();
    c.train.beta1 = t["beta1"].get<double>();
    c.train.beta2 = t["beta2"].get<double>();
    c.train.eps = t["eps"].get<double>();

    const auto& l = merged["loss"];
    c.loss.lambda_s = l["lambda_s"].get<double>();
    c.loss.alpha = l["alpha"].get<double>();
    c.loss.beta = l["beta"].get<double>();
    c.loss.lambda_1 = l["lambda_1"].get<double>();
    c.loss.lambda_2 = l["lambda_2"].get<double>();
    c.loss.omega_rare = l["omega_rare"].get<double>();

    const auto& di = merged["discovery"];
    c.discovery.resolution = di["resolution"].get<double>();
    c.discovery.theta_atom = di["theta_atom"].get<double>();
    c.discovery.cohort = di["cohort"].get<std::string>();
    c.discovery.top_n = di["top_n"].get<std::size_t>();

    const auto& sy = merged["synthesis"];
    c.synthesis.module = sy["module"].get<int>();
    c.synthesis.alpha_lo = sy["alpha_lo"].get<double>();
    c.synthesis.alpha_hi = sy["alpha_hi"].get<double>();
    c.synthesis.n_samples = sy["n_samples"].get<std::size_t>();

    const auto& e = merged["eval"];
    c.eval.folds = e["folds"].get<std::size_t>();
    c.eval.runs = e["runs"].get<std::size_t>();
    c.eval.spec_target = e["spec_target"].get<double>();
    c.eval.l2_reg = e["l2_reg"].get<double>();
    c.eval.augment_l2_reg = e["augment_l2_reg"].get<double>();
    c.eval.synthetic_ratio = e["synthetic_ratio"].get<double>();
    c.eval.subsample = e["subsample"].get<double>();

    c.validate();
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);

    const json schema = to_json(default_run_config());
    const json* node = &schema;
    json* target = &doc;
    std::stringstream ss(path);
    std::string part, walked;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        walked += (walked.empty() ? "" : ".") + parts[i];
        if (!node->is_object() || !node->contains(parts[i])) throw ConfigError(walked + ": unknown key");
        node = &node->at(parts[i]);
        if (i + 1 < parts.size()) {
            if (!target->contains(parts[i])) (*target)[parts[i]] = json::object();
            target = &(*target)[parts[i]];
        }
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded() || (node->is_string() && !value.is_string())) value = text;
    (*target)[parts.back()] = value;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config file not readable: " + path.string());
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return run_config_from_json(doc);
}

}  // namespace hhsae
