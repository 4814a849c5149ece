#pragma once

#include <optional>
#include <string>

#include "bbm/fc_prior.hpp"
#include "bbm/fit.hpp"
#include "bbm/io.hpp"
#include "bbm/preprocess.hpp"
#include "bbm/spatial_prior.hpp"

namespace bbm {

// A prior bundle is a directory: manifest.json + mean.bbm + var.bbm, plus
// fc.json and its matrices when an FC prior was built. The manifest records
// the preprocessing settings the prior was trained with; fits must reuse them.
struct PriorBundle {
    SpatialPrior spatial;
    std::optional<FCPrior> fc;
    bool gsr = false;
    ScaleMode scale = ScaleMode::Global;
    std::string template_kind = "maps";
};

inline void save_prior_bundle(const fs::path& dir, const PriorBundle& bundle) {
    fs::create_directories(dir);
    write_bbm_matrix(dir / "mean.bbm", bundle.spatial.mean);
    write_bbm_matrix(dir / "var.bbm", bundle.spatial.var);
    json manifest = {{"format_version", 1},
                     {"template", bundle.spatial.template_name},
                     {"template_kind", bundle.template_kind},
                     {"q", bundle.spatial.q_count()},
                     {"v", bundle.spatial.v_count()},
                     {"n_subjects", bundle.spatial.n_subjects},
                     {"gsr", bundle.gsr},
                     {"scale", to_string(bundle.scale)}};
    write_json_file(dir / "manifest.json", manifest);

    if (!bundle.fc) return;
    const FCPrior& fc = *bundle.fc;
    std::string kind = to_string(fc.kind);
    if (fc.has_iw && fc.has_cholesky) kind = "both";
    json fcj = {{"kind", kind}, {"q", fc.q}};
    write_bbm_matrix(dir / "fc_emp_mean.bbm", fc.emp_mean);
    write_bbm_matrix(dir / "fc_emp_var.bbm", fc.emp_var);
    if (fc.has_iw) {
        fcj["nu"] = fc.iw_nu;
        write_bbm_matrix(dir / "fc_iw_psi.bbm", fc.iw_psi);
    }
    if (fc.has_cholesky) {
        fcj["permutations"] = fc.permutations;
        write_bbm_matrix(dir / "fc_chol_mean.bbm", fc.chol_mean);
        write_bbm_matrix(dir / "fc_chol_var.bbm", fc.chol_var);
    }
    write_json_file(dir / "fc.json", fcj);
}

inline PriorBundle load_prior_bundle(const fs::path& dir) {
    PriorBundle bundle;
    const json manifest = read_json_file(dir / "manifest.json");
    bundle.spatial.mean = read_bbm_matrix(dir / "mean.bbm");
    bundle.spatial.var = read_bbm_matrix(dir / "var.bbm");
    bundle.spatial.n_subjects = manifest.at("n_subjects").get<int>();
    bundle.spatial.template_name = manifest.at("template").get<std::string>();
    bundle.gsr = manifest.at("gsr").get<bool>();
    bundle.spatial.gsr_flag = bundle.gsr ? "gsr" : "nogsr";
    bundle.scale = scale_mode_from_string(manifest.at("scale").get<std::string>());
    bundle.template_kind = manifest.value("template_kind", std::string("maps"));
    bundle.spatial.validate();
    if (manifest.at("q").get<int>() != bundle.spatial.q_count() ||
        manifest.at("v").get<Eigen::Index>() != bundle.spatial.v_count())
        throw DimensionMismatch("prior bundle: manifest dims disagree with matrices");

    if (fs::exists(dir / "fc.json")) {
        FCPrior fc;
        const json fcj = read_json_file(dir / "fc.json");
        fc.q = fcj.at("q").get<int>();
        fc.emp_mean = read_bbm_matrix(dir / "fc_emp_mean.bbm");
        fc.emp_var = read_bbm_matrix(dir / "fc_emp_var.bbm");
        const auto kind = fcj.at("kind").get<std::string>();
        fc.kind = (kind == "cholesky") ? FCPriorKind::Cholesky : FCPriorKind::InverseWishart;
        if (fcj.contains("nu")) {
            fc.iw_nu = fcj.at("nu").get<double>();
            fc.iw_psi = read_bbm_matrix(dir / "fc_iw_psi.bbm");
            fc.has_iw = true;
        }
        if (fcj.contains("permutations")) {
            fc.permutations = fcj.at("permutations").get<std::vector<std::vector<int>>>();
            fc.chol_mean = read_bbm_matrix(dir / "fc_chol_mean.bbm");
            fc.chol_var = read_bbm_matrix(dir / "fc_chol_var.bbm");
            fc.has_cholesky = true;
        }
        bundle.fc = std::move(fc);
    }
    return bundle;
}

// Fit bundle: posterior summaries plus fit.json with the configuration and
// the per-iteration objective values.
inline void save_fit_bundle(const fs::path& dir, const SubjectFit& fit, const FitConfig& cfg) {
    fs::create_directories(dir);
    write_bbm_matrix(dir / "s_mean.bbm", fit.s_mean);
    write_bbm_matrix(dir / "s_var.bbm", fit.s_var);
    write_bbm_matrix(dir / "A.bbm", fit.A);
    write_bbm_matrix(dir / "G.bbm", fit.G_hat);
    write_bbm_matrix(dir / "tau2.bbm", fit.tau2);
    json j = {{"n_iters", fit.n_iters},
              {"converged", fit.converged},
              {"objective_init", fit.objective_init},
              {"objective_trace", fit.objective_trace},
              {"objective_pre_norm", fit.objective_pre_norm},
              {"config",
               {{"max_iters", cfg.max_iters},
                {"tol", cfg.tol},
                {"fc_prior", to_string(cfg.fc_prior)},
                {"cholesky_K", cfg.cholesky_K},
                {"noise_model", to_string(cfg.noise_model)},
                {"rng_seed", cfg.rng_seed},
                {"threads", cfg.threads}}}};
    write_json_file(dir / "fit.json", j);
}

inline SubjectFit load_fit_bundle(const fs::path& dir) {
    SubjectFit fit;
    fit.s_mean = read_bbm_matrix(dir / "s_mean.bbm");
    fit.s_var = read_bbm_matrix(dir / "s_var.bbm");
    fit.A = read_bbm_matrix(dir / "A.bbm");
    fit.G_hat = read_bbm_matrix(dir / "G.bbm");
    fit.tau2 = read_bbm_matrix(dir / "tau2.bbm");
    const json j = read_json_file(dir / "fit.json");
    fit.n_iters = j.at("n_iters").get<int>();
    fit.converged = j.at("converged").get<bool>();
    fit.objective_init = j.value("objective_init", 0.0);
    if (j.contains("objective_trace"))
        fit.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    if (j.contains("objective_pre_norm"))
        fit.objective_pre_norm = j.at("objective_pre_norm").get<std::vector<double>>();
    return fit;
}

}  // namespace bbm
