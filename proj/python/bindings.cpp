#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hhsae/cli.hpp"
#include "hhsae/data.hpp"
#include "hhsae/discovery.hpp"
#include "hhsae/evaluation.hpp"
#include "hhsae/model.hpp"
#include "hhsae/trainer.hpp"

namespace py = pybind11;
using namespace hhsae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() == 1) return Matrix(static_cast<std::size_t>(a.shape(0)), 1, {a.data(), a.data() + a.size()});
    if (a.ndim() != 2) throw py::value_error("expected a 1-D or 2-D array");
    return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  {a.data(), a.data() + a.size()});
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

ModelDims dims_from_dict(const py::dict& d) {
    ModelDims dims;
    for (auto [k, v] : d) {
        const auto key = k.cast<std::string>();
        if (key == "D") dims.D = v.cast<std::size_t>();
        else if (key == "d_dense") dims.d_dense = v.cast<std::size_t>();
        else if (key == "d1") dims.d1 = v.cast<std::size_t>();
        else if (key == "k1") dims.k1 = v.cast<std::size_t>();
        else if (key == "d2") dims.d2 = v.cast<std::size_t>();
        else if (key == "k2") dims.k2 = v.cast<std::size_t>();
        else if (key == "dense_enabled") dims.dense_enabled = v.cast<bool>();
        else throw py::key_error("unknown model dimension '" + key + "'");
    }
    return dims;
}

py::dict dims_to_dict(const ModelDims& d) {
    py::dict out;
    out["D"] = d.D;
    out["d_dense"] = d.d_dense;
    out["d1"] = d.d1;
    out["k1"] = d.k1;
    out["d2"] = d.d2;
    out["k2"] = d.k2;
    out["dense_enabled"] = d.dense_enabled;
    return out;
}

Dataset dataset_from(const Array& x, const std::vector<int>& y) {
    Dataset d;
    d.X = to_matrix(x);
    d.y = y;
    for (std::size_t f = 0; f < d.X.cols(); ++f) {
        d.feature_names.push_back("f" + std::to_string(f));
        d.feature_kinds.push_back(FeatureKind::Continuous);
    }
    d.validate();
    return d;
}

py::dict report_to_dict(const EpochReport& r) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["loss"] = r.loss.total;
    d["recon"] = r.loss.recon;
    d["dead_feature_ratio_L1"] = r.dead_feature_ratio_L1;
    d["dead_feature_ratio_L2"] = r.dead_feature_ratio_L2;
    d["energy_L1"] = r.energy_L1;
    d["energy_L2"] = r.energy_L2;
    d["mse_pos"] = r.mse_pos;
    d["mse_neg"] = r.mse_neg;
    d["lr"] = r.lr_used;
    return d;
}

}  // namespace

PYBIND11_MODULE(_hhsae, m) {
    m.doc() = "Hierarchical sparse autoencoder core";
    py::register_exception<Error>(m, "HhsaeError", PyExc_RuntimeError);

    py::class_<ModelParams>(m, "Model")
        .def_property_readonly("dims", [](const ModelParams& p) { return dims_to_dict(p.dims); })
        .def("tensors", [](const ModelParams& p) {
            py::dict out;
            for (const auto& [name, t] : p.tensors()) out[py::str(name)] = to_array(*t);
            return out;
        })
        .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

    m.def("init_model", [](const py::dict& dims, std::uint64_t seed) { return init_model(dims_from_dict(dims), seed); },
          py::arg("dims"), py::arg("seed") = 0);

    m.def("forward", [](const ModelParams& p, const Array& x) {
        const auto t = full_forward(to_matrix(x), p);
        py::dict out;
        out["z_dense"] = to_array(t.z_dense);
        out["x_hat_cont"] = to_array(t.x_hat_cont);
        out["x_resid"] = to_array(t.x_resid);
        out["z1"] = to_array(t.z1);
        out["z2"] = to_array(t.z2);
        out["z1_hat"] = to_array(t.z1_hat);
        out["x_hat"] = to_array(t.x_hat);
        return out;
    }, py::arg("model"), py::arg("x"));

    m.def("generate_synthetic_manifold", [](std::size_t n, std::size_t D, std::size_t r, std::size_t m_atoms,
                                             std::size_t n_motifs, std::size_t atoms_per_motif, double prevalence,
                                             double noise_std, std::uint64_t seed) {
        ManifoldConfig cfg;
        cfg.n = n;
        cfg.D = D;
        cfg.r = r;
        cfg.m = m_atoms;
        cfg.n_motifs = n_motifs;
        cfg.atoms_per_motif = atoms_per_motif;
        cfg.prevalence = prevalence;
        cfg.noise_std = noise_std;
        cfg.rng_seed = seed;
        auto [data, truth] = generate_synthetic_manifold(cfg);
        py::dict out;
        out["X"] = to_array(data.X);
        out["y"] = data.y;
        out["feature_names"] = data.feature_names;
        out["context_basis"] = to_array(truth.context_basis);
        out["atom_dictionary"] = to_array(truth.atom_dictionary);
        out["motif_table"] = truth.motif_table;
        out["motif_assignments"] = truth.motif_assignments;
        return out;
    }, py::arg("n") = 20000, py::arg("D") = 32, py::arg("r") = 8, py::arg("m") = 64, py::arg("n_motifs") = 4,
       py::arg("atoms_per_motif") = 4, py::arg("prevalence") = 0.02, py::arg("noise_std") = 0.05, py::arg("seed") = 0);

    m.def("train", [](const Array& x, const std::vector<int>& y, const py::dict& dims, std::size_t epochs,
                      std::size_t batch_size, double lr, std::uint64_t seed) {
        const Dataset data = dataset_from(x, y);
        TrainConfig cfg;
        cfg.dims = dims_from_dict(dims);
        cfg.dims.D = data.d();
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.lr = lr;
        cfg.rng_seed = seed;
        TrainResult res;
        {
            py::gil_scoped_release release;
            res = train(data, cfg);
        }
        py::list reports;
        for (const auto& r : res.reports) reports.append(report_to_dict(r));
        return py::make_tuple(res.params, reports);
    }, py::arg("x"), py::arg("y"), py::arg("dims") = py::dict(), py::arg("epochs") = 150,
       py::arg("batch_size") = 64, py::arg("lr") = 1e-3, py::arg("seed") = 0,
       "Train on already-preprocessed data; returns (model, per-epoch reports).");

    m.def("save_checkpoint", [](const ModelParams& p, const std::string& path) { save_checkpoint(p, nullptr, path); },
          py::arg("model"), py::arg("path"));
    m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path).params; }, py::arg("path"));

    m.def("auc", &auc, py::arg("scores"), py::arg("labels"));
    m.def("auprc", &auprc, py::arg("scores"), py::arg("labels"));
    m.def("recall_at_specificity", &recall_at_specificity, py::arg("scores"), py::arg("labels"),
          py::arg("spec_target") = 0.90);
    m.def("best_f1", &best_f1, py::arg("scores"), py::arg("labels"));

    m.def("affinity_from_codes", [](const Array& z2) { return to_array(affinity_from_codes(to_matrix(z2)).A); },
          py::arg("z2"), "Co-firing affinity of L2 neurons over a cohort's codes.");
    m.def("detect_modules", [](const Array& affinity, double resolution, std::uint64_t seed) {
        const auto det = detect_modules(AffinityMatrix{to_matrix(affinity), 0}, resolution, seed);
        py::list modules;
        for (const auto& mod : det.modules) modules.append(mod.neuron_ids);
        return py::make_tuple(modules, det.modularity, det.warning);
    }, py::arg("affinity"), py::arg("resolution") = 1.0, py::arg("seed") = 0,
       "Returns (modules as neuron-id lists, modularity, warning).");

    m.def("fit_linear_probe", [](const Array& features, const std::vector<int>& labels, double l2_reg,
                                 std::size_t folds, std::uint64_t seed) {
        const auto r = fit_linear_probe(to_matrix(features), labels, l2_reg, folds, seed);
        return py::make_tuple(r.auc, r.auc_sd, r.fold_aucs);
    }, py::arg("features"), py::arg("labels"), py::arg("l2_reg") = 1e-3, py::arg("folds") = 3, py::arg("seed") = 0,
       "k-fold logistic probe; returns (mean AUC, sd, per-fold AUCs).");

    m.def("run_cli", [](const std::string& command, const std::string& run_dir, const std::string& config,
                        const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
        CliOptions opts;
        opts.run_dir = run_dir;
        opts.config_path = config;
        opts.overrides = overrides;
        opts.seed = seed;
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = run(command, opts, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("command"), py::arg("run_dir"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
       py::arg("seed") = py::none(), "Run one pipeline command; returns (exit_code, stdout, stderr).");
}
