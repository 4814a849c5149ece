// bbm: estimate population priors, fit single subjects, test engagements.
//
// Subcommands: simulate, estimate-prior, fit, engagements, overlap.
// Every run writes a run_manifest.json into --out recording the command,
// configuration hash, inputs, seed and a fingerprint of the outputs.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <algorithm>
#include <chrono>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bbm/bbm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class ManifestWriter {
public:
    ManifestWriter(std::string command, fs::path out_dir)
        : command_(std::move(command)),
          out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_dir_);
    }

    void set_config(json cfg) { config_ = std::move(cfg); }
    void add_input(const fs::path& p) { inputs_.push_back(p.string()); }
    void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

    void add_outputs_under(const fs::path& dir) {
        std::vector<std::string> found;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file() && e.path().filename() != "run_manifest.json")
                found.push_back(e.path().string());
        std::sort(found.begin(), found.end());
        for (auto& f : found) outputs_.push_back(std::move(f));
    }

    void write(std::uint64_t seed) {
        std::sort(outputs_.begin(), outputs_.end());
        std::uint64_t out_hash = 0xcbf29ce484222325ULL;
        for (const auto& f : outputs_) {
            const std::string rel = fs::path(f).filename().string();
            out_hash = bbm::fnv1a64(rel.data(), rel.size(), out_hash);
            out_hash = bbm::fnv1a64_file(f, out_hash);
        }
        const std::string cfg_str = config_.dump();
        const auto elapsed = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start_).count();
        json manifest = {{"command", command_},
                         {"version", bbm::kVersion},
                         {"seed", seed},
                         {"config", config_},
                         {"config_hash", hex64(bbm::fnv1a64(cfg_str.data(), cfg_str.size()))},
                         {"inputs", inputs_},
                         {"outputs", outputs_},
                         {"output_hash", hex64(out_hash)},
                         {"wall_time_s", elapsed}};
        bbm::write_json_file(out_dir_ / "run_manifest.json", manifest);
    }

private:
    std::string command_;
    fs::path out_dir_;
    std::chrono::steady_clock::time_point start_;
    json config_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
};

struct CensorOptions {
    double fd_threshold = 0.5;
    int fd_lag = 1;
    double head_radius = 50.0;
    int drop_initial = 15;
    double min_duration_s = 600.0;
};

// Load one session, apply censoring (FD-based when motion is available) and
// the shared normalization pipeline.
bbm::BoldMatrix load_session(const fs::path& data_path,
                             const std::optional<fs::path>& motion_path,
                             const CensorOptions& censor_opts, bool gsr,
                             bbm::ScaleMode scale) {
    bbm::BoldMatrix b = bbm::load_bold(data_path);
    bbm::Vector fd = bbm::Vector::Zero(static_cast<Eigen::Index>(b.kept_mask.size()));
    if (motion_path) {
        bbm::MotionParams motion;
        motion.params = bbm::read_csv_matrix(*motion_path);
        fd = bbm::compute_fd(motion, censor_opts.head_radius, censor_opts.fd_lag);
    }
    b = bbm::censor(b, fd, censor_opts.fd_threshold, censor_opts.drop_initial,
                    censor_opts.min_duration_s);
    return bbm::preprocess(b, gsr, scale);
}

struct SubjectSessions {
    std::string subject_id;
    std::vector<fs::path> data;
    std::vector<fs::path> motion;  // empty or one per session
};

std::vector<SubjectSessions> read_subject_list(const fs::path& list_path) {
    const json j = bbm::read_json_file(list_path);
    const fs::path base = list_path.parent_path();
    std::vector<SubjectSessions> subjects;
    for (const auto& entry : j.at("subjects")) {
        SubjectSessions s;
        s.subject_id = entry.at("subject").get<std::string>();
        for (const auto& p : entry.at("sessions"))
            s.data.push_back(base / p.get<std::string>());
        if (entry.contains("motion"))
            for (const auto& p : entry.at("motion"))
                s.motion.push_back(base / p.get<std::string>());
        if (!s.motion.empty() && s.motion.size() != s.data.size())
            throw bbm::ValidationError("subject " + s.subject_id +
                                       ": motion file count does not match sessions");
        subjects.push_back(std::move(s));
    }
    return subjects;
}

int run_simulate(const fs::path& out, bbm::SynthConfig cfg, double snr) {
    ManifestWriter manifest("simulate", out);
    if (snr > 0.0)
        cfg.noise_sd = bbm::noise_sd_for_snr(
            bbm::population_prior(cfg).mean,
            cfg.fc_base.size() ? cfg.fc_base : bbm::ar1_correlation(cfg.q, 0.5), snr);
    manifest.set_config({{"q", cfg.q},
                         {"v", cfg.v},
                         {"t", cfg.t},
                         {"subjects", cfg.n_subjects},
                         {"noise_sd", cfg.noise_sd},
                         {"geometry", bbm::to_string(cfg.geometry)},
                         {"fc_perturb", cfg.fc_perturb_scale},
                         {"var_scale", cfg.var_scale},
                         {"var_floor", cfg.var_floor},
                         {"tr_seconds", cfg.tr_seconds},
                         {"seed", cfg.rng_seed}});

    const bbm::SynthPopulation pop = bbm::simulate_population(cfg);
    const fs::path truth = out / "truth";
    fs::create_directories(truth);
    bbm::write_bbm_matrix(truth / "mean.bbm", pop.prior.mean);
    bbm::write_bbm_matrix(truth / "var.bbm", pop.prior.var);
    bbm::write_bbm_matrix(truth / "fc_base.bbm", pop.fc_base);
    bbm::write_bbm_matrix(out / "template.bbm", pop.prior.mean);

    json subjects = json::array();
    for (std::size_t i = 0; i < pop.subjects.size(); ++i) {
        const auto& subj = pop.subjects[i];
        const std::string sid = subj.sessions[0].subject_id;
        json sessions = json::array();
        for (int s = 0; s < 2; ++s) {
            const std::string name = sid + "_ses-" + std::to_string(s + 1) + ".bbm";
            bbm::save_bold(out / name, subj.sessions[static_cast<std::size_t>(s)]);
            sessions.push_back(name);
        }
        bbm::write_bbm_matrix(truth / (sid + "_S.bbm"), subj.s_true);
        bbm::write_bbm_matrix(truth / (sid + "_G.bbm"), subj.g_true);
        subjects.push_back({{"subject", sid}, {"sessions", sessions}});
    }
    bbm::write_json_file(out / "list.json", json{{"subjects", subjects}});

    manifest.add_outputs_under(out);
    manifest.write(cfg.rng_seed);
    std::cout << "simulated " << pop.subjects.size() << " subjects (Q=" << cfg.q
              << ", V=" << cfg.v << ", T=" << cfg.t << ") into " << out.string() << "\n";
    return 0;
}

int run_estimate_prior(const fs::path& out, const fs::path& list_path,
                       const fs::path& template_path, const std::string& template_kind,
                       bool gsr, const std::string& scale_str, bool split_sessions,
                       const CensorOptions& censor_opts, const std::string& fc_kind,
                       int permutations, double var_floor, std::uint64_t seed) {
    ManifestWriter manifest("estimate-prior", out);
    manifest.set_config({{"template", template_path.string()},
                         {"template_kind", template_kind},
                         {"gsr", gsr},
                         {"scale", scale_str},
                         {"split_sessions", split_sessions},
                         {"fd_threshold", censor_opts.fd_threshold},
                         {"fd_lag", censor_opts.fd_lag},
                         {"drop_initial", censor_opts.drop_initial},
                         {"min_duration_s", censor_opts.min_duration_s},
                         {"fc_prior", fc_kind},
                         {"permutations", permutations},
                         {"var_floor", var_floor},
                         {"seed", seed}});
    manifest.add_input(list_path);
    manifest.add_input(template_path);

    const bbm::ScaleMode scale = bbm::scale_mode_from_string(scale_str);
    const bbm::TemplateKind tkind = template_kind == "parcellation"
                                        ? bbm::TemplateKind::Parcellation
                                        : bbm::TemplateKind::ContinuousMaps;
    const bbm::NetworkTemplate tmpl = bbm::load_template(template_path, tkind);

    const auto subjects = read_subject_list(list_path);
    std::vector<std::pair<bbm::Matrix, bbm::Matrix>> subject_maps;
    std::vector<bbm::Matrix> fc_training;
    for (const auto& subj : subjects) {
        std::array<bbm::BoldMatrix, 2> sessions;
        if (split_sessions) {
            if (subj.data.size() != 1)
                throw bbm::ValidationError("subject " + subj.subject_id +
                                           ": --split-sessions expects exactly one session");
            const auto motion = subj.motion.empty()
                                    ? std::nullopt
                                    : std::optional<fs::path>(subj.motion[0]);
            const bbm::BoldMatrix whole =
                load_session(subj.data[0], motion, censor_opts, gsr, scale);
            auto [first, second] = bbm::split_pseudo_sessions(whole);
            sessions = {std::move(first), std::move(second)};
        } else {
            if (subj.data.size() != 2)
                throw bbm::ValidationError(
                    "subject " + subj.subject_id +
                    ": need exactly 2 sessions (or --split-sessions with 1)");
            for (int s = 0; s < 2; ++s) {
                const auto motion =
                    subj.motion.empty()
                        ? std::nullopt
                        : std::optional<fs::path>(subj.motion[static_cast<std::size_t>(s)]);
                sessions[static_cast<std::size_t>(s)] = load_session(
                    subj.data[static_cast<std::size_t>(s)], motion, censor_opts, gsr, scale);
            }
        }
        std::array<bbm::DualRegResult, 2> dr;
        for (int s = 0; s < 2; ++s) {
            dr[static_cast<std::size_t>(s)] =
                bbm::dual_regress(sessions[static_cast<std::size_t>(s)], tmpl);
            fc_training.push_back(bbm::correlation_matrix(
                dr[static_cast<std::size_t>(s)].timecourses));
        }
        subject_maps.emplace_back(dr[0].maps, dr[1].maps);
        for (const auto& p : subj.data) manifest.add_input(p);
    }

    if (subject_maps.size() < 2)
        throw bbm::ValidationError("need >= 2 subjects to estimate a prior, got " +
                                   std::to_string(subject_maps.size()));

    bbm::PriorBundle bundle;
    bundle.spatial = bbm::clamp_and_inflate(bbm::estimate_spatial_prior(subject_maps), var_floor);
    bundle.spatial.template_name = template_path.stem().string();
    bundle.spatial.gsr_flag = gsr ? "gsr" : "nogsr";
    bundle.gsr = gsr;
    bundle.scale = scale;
    bundle.template_kind = template_kind;
    if (fc_kind != "none") {
        const bool build_iw = fc_kind == "iw" || fc_kind == "both";
        const bool build_chol = fc_kind == "cholesky" || fc_kind == "both";
        bundle.fc = bbm::make_fc_prior(fc_training,
                                       build_chol ? bbm::FCPriorKind::Cholesky
                                                  : bbm::FCPriorKind::InverseWishart,
                                       build_iw, build_chol, permutations, seed);
    }
    bbm::save_prior_bundle(out, bundle);

    manifest.add_outputs_under(out);
    manifest.write(seed);
    std::cout << "prior bundle from " << subject_maps.size() << " subjects written to "
              << out.string() << "\n";
    return 0;
}

int run_fit(const fs::path& out, const std::vector<fs::path>& data_paths,
            const fs::path& prior_dir, bbm::FitConfig cfg, int gsr_flag_count, bool gsr_flag,
            int scale_flag_count, const std::string& scale_flag) {
    ManifestWriter manifest("fit", out);
    const bbm::PriorBundle bundle = bbm::load_prior_bundle(prior_dir);

    // The bundle records the normalization the prior was trained with; explicit
    // flags must agree with it.
    if (gsr_flag_count > 0 && gsr_flag != bundle.gsr)
        throw bbm::ValidationError("--gsr disagrees with the prior bundle (trained with gsr=" +
                                   std::string(bundle.gsr ? "true" : "false") + ")");
    if (scale_flag_count > 0 && bbm::scale_mode_from_string(scale_flag) != bundle.scale)
        throw bbm::ValidationError("--scale disagrees with the prior bundle (trained with " +
                                   bbm::to_string(bundle.scale) + ")");

    manifest.set_config({{"prior", prior_dir.string()},
                         {"fc_prior", bbm::to_string(cfg.fc_prior)},
                         {"tol", cfg.tol},
                         {"max_iters", cfg.max_iters},
                         {"cholesky_samples", cfg.cholesky_K},
                         {"noise_model", bbm::to_string(cfg.noise_model)},
                         {"threads", cfg.threads},
                         {"gsr", bundle.gsr},
                         {"scale", bbm::to_string(bundle.scale)},
                         {"seed", cfg.rng_seed}});
    manifest.add_input(prior_dir / "manifest.json");

    bbm::BoldMatrix data;
    for (std::size_t i = 0; i < data_paths.size(); ++i) {
        manifest.add_input(data_paths[i]);
        bbm::BoldMatrix b = bbm::load_bold(data_paths[i]);
        b = bbm::preprocess(b, bundle.gsr, bundle.scale);
        if (i == 0) {
            data = std::move(b);
        } else {
            if (b.v_count() != data.v_count())
                throw bbm::DimensionMismatch("session " + data_paths[i].string() +
                                             " has a different location count");
            // Simple temporal concatenation of preprocessed sessions.
            bbm::Matrix stacked(data.t_count() + b.t_count(), data.v_count());
            stacked << data.data, b.data;
            data.data = std::move(stacked);
            data.reset_mask();
        }
    }

    std::optional<bbm::FCPrior> fc = bundle.fc;
    if (cfg.fc_prior == bbm::FCPriorChoice::None) {
        fc.reset();
    } else if (fc) {
        fc->kind = cfg.fc_prior == bbm::FCPriorChoice::Cholesky
                       ? bbm::FCPriorKind::Cholesky
                       : bbm::FCPriorKind::InverseWishart;
    } else {
        throw bbm::ValidationError("prior bundle has no FC prior but --fc-prior was requested");
    }

    const bbm::SubjectFit fit = bbm::fit_subject(data, bundle.spatial, fc, cfg);
    bbm::save_fit_bundle(out, fit, cfg);

    manifest.add_outputs_under(out);
    manifest.write(cfg.rng_seed);
    std::cout << "fit " << (fit.converged ? "converged" : "stopped") << " after "
              << fit.n_iters << " iterations; bundle written to " << out.string() << "\n";
    return 0;
}

int run_engagements(const fs::path& out, const fs::path& fit_dir, const fs::path& prior_dir,
                    std::vector<double> zs, double alpha, const std::string& correction_str) {
    ManifestWriter manifest("engagements", out);
    if (zs.empty()) zs = {0.0, 1.0, 2.0, 3.0};
    std::sort(zs.begin(), zs.end());
    manifest.set_config(
        {{"fit", fit_dir.string()}, {"prior", prior_dir.string()}, {"z", zs},
         {"alpha", alpha}, {"correction", correction_str}});
    manifest.add_input(fit_dir / "fit.json");
    manifest.add_input(prior_dir / "manifest.json");

    const bbm::SubjectFit fit = bbm::load_fit_bundle(fit_dir);
    const bbm::PriorBundle bundle = bbm::load_prior_bundle(prior_dir);
    const bbm::EngagementResult res =
        bbm::engagements(fit, bundle.spatial, zs, alpha,
                         bbm::correction_from_string(correction_str));

    json report = {{"alpha", res.alpha},
                   {"correction", bbm::to_string(res.correction)},
                   {"z", res.zs},
                   {"networks", json::array()}};
    for (Eigen::Index q = 0; q < res.thresholds.cols(); ++q) {
        json nets = {{"network", q}, {"thresholds", json::array()}, {"counts", json::array()}};
        for (std::size_t zi = 0; zi < res.zs.size(); ++zi) {
            nets["thresholds"].push_back(res.thresholds(static_cast<Eigen::Index>(zi), q));
            nets["counts"].push_back(static_cast<long>(res.masks[zi].row(q).count()));
        }
        report["networks"].push_back(std::move(nets));
    }
    bbm::write_json_file(out / "engagements.json", report);
    for (std::size_t zi = 0; zi < res.zs.size(); ++zi) {
        bbm::Matrix mask01 = res.masks[zi].cast<double>().matrix();
        std::string zname = std::to_string(res.zs[zi]);
        zname.erase(zname.find_last_not_of('0') + 1);
        if (!zname.empty() && zname.back() == '.') zname.pop_back();
        bbm::write_bbm_matrix(out / ("engagement_z" + zname + ".bbm"), mask01);
    }

    manifest.add_outputs_under(out);
    manifest.write(0);
    std::cout << "engagement masks for " << res.zs.size() << " thresholds written to "
              << out.string() << "\n";
    return 0;
}

int run_overlap(const fs::path& out, const fs::path& a_path, const std::string& a_kind,
                const std::optional<fs::path>& b_path, const std::string& b_kind, double z) {
    ManifestWriter manifest("overlap", out);
    manifest.set_config({{"a", a_path.string()},
                         {"a_kind", a_kind},
                         {"b", b_path ? b_path->string() : a_path.string()},
                         {"b_kind", b_kind},
                         {"z", z}});
    manifest.add_input(a_path);

    auto load = [&](const fs::path& p, const std::string& kind) {
        return bbm::load_template(p, kind == "parcellation" ? bbm::TemplateKind::Parcellation
                                                            : bbm::TemplateKind::ContinuousMaps);
    };
    const bbm::NetworkTemplate ta = load(a_path, a_kind);
    const bbm::BoolMatrix ma = bbm::template_masks(ta, z);
    bbm::BoolMatrix mb = ma;
    if (b_path) {
        manifest.add_input(*b_path);
        mb = bbm::template_masks(load(*b_path, b_kind), z);
    }
    const bbm::OverlapMatrix ovl{bbm::dice_matrix(ma, mb), z, a_kind};
    bbm::write_csv_matrix(out / "overlap.csv", ovl.dice, ta.network_names);

    manifest.add_outputs_under(out);
    manifest.write(0);
    std::cout << "dice overlap matrix written to " << (out / "overlap.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian brain mapping: population priors, subject fits, engagement maps"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    fs::path sim_out;
    bbm::SynthConfig scfg;
    double sim_snr = 0.0;
    std::string sim_geometry = "blocks";
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--q", scfg.q, "networks");
    sim->add_option("--v", scfg.v, "locations");
    sim->add_option("--t", scfg.t, "time points per session");
    sim->add_option("--subjects", scfg.n_subjects, "subjects");
    sim->add_option("--noise-sd", scfg.noise_sd, "white noise sd");
    sim->add_option("--snr", sim_snr, "overrides --noise-sd to hit this signal-to-noise ratio");
    sim->add_option("--geometry", sim_geometry, "blocks|gaussian_bumps");
    sim->add_option("--fc-perturb", scfg.fc_perturb_scale, "per-subject FC perturbation sd");
    sim->add_option("--var-scale", scfg.var_scale, "population variance per unit engagement");
    sim->add_option("--var-floor", scfg.var_floor, "population variance floor");
    sim->add_option("--tr", scfg.tr_seconds, "repetition time (s)");
    sim->add_option("--seed", scfg.rng_seed, "rng seed");

    // estimate-prior
    auto* est = app.add_subcommand("estimate-prior", "estimate a prior bundle from training data");
    fs::path est_out, est_list, est_template;
    std::string est_tkind = "maps", est_scale = "global", est_fc = "both";
    bool est_gsr = false, est_split = false;
    CensorOptions est_censor;
    int est_perms = 10;
    double est_var_floor = 0.0;
    std::uint64_t est_seed = 0;
    est->add_option("--out", est_out, "output bundle directory")->required();
    est->add_option("--list", est_list, "JSON subject list")->required();
    est->add_option("--template", est_template, "template file")->required();
    est->add_option("--template-kind", est_tkind, "maps|parcellation");
    est->add_flag("--gsr", est_gsr, "regress out the global signal");
    est->add_option("--scale", est_scale, "global|local|none");
    est->add_flag("--split-sessions", est_split, "split single sessions into pseudo sessions");
    est->add_option("--fd-threshold", est_censor.fd_threshold, "FD censoring threshold (mm)");
    est->add_option("--fd-lag", est_censor.fd_lag, "FD lag (volumes)");
    est->add_option("--head-radius", est_censor.head_radius, "head radius (mm)");
    est->add_option("--drop-initial", est_censor.drop_initial, "initial volumes to drop");
    est->add_option("--min-duration-s", est_censor.min_duration_s, "minimum retained duration");
    est->add_option("--fc-prior", est_fc, "iw|cholesky|both|none");
    est->add_option("--permutations", est_perms, "orderings for the Cholesky prior");
    est->add_option("--var-floor", est_var_floor, "spatial prior variance floor");
    est->add_option("--seed", est_seed, "rng seed");

    // fit
    auto* fit = app.add_subcommand("fit", "fit the model for one subject");
    fs::path fit_out, fit_prior;
    std::vector<fs::path> fit_data;
    std::string fit_fc = "none", fit_noise = "per_location", fit_scale = "global";
    bool fit_gsr = false;
    bbm::FitConfig fcfg;
    fit->add_option("--out", fit_out, "output bundle directory")->required();
    fit->add_option("--data", fit_data, "session data (repeat to concatenate)")->required();
    fit->add_option("--prior", fit_prior, "prior bundle directory")->required();
    fit->add_option("--fc-prior", fit_fc, "none|iw|cholesky");
    fit->add_option("--tol", fcfg.tol, "relative change convergence tolerance");
    fit->add_option("--max-iters", fcfg.max_iters, "iteration cap");
    fit->add_option("--cholesky-samples", fcfg.cholesky_K, "prior draws for the Cholesky update");
    fit->add_option("--noise-model", fit_noise, "per_location|global");
    fit->add_option("--seed", fcfg.rng_seed, "rng seed");
    fit->add_option("--threads", fcfg.threads, "worker threads");
    auto* fit_gsr_opt = fit->add_flag("--gsr,!--no-gsr", fit_gsr,
                                      "must match the bundle (checked)");
    auto* fit_scale_opt = fit->add_option("--scale", fit_scale, "must match the bundle (checked)");

    // engagements
    auto* eng = app.add_subcommand("engagements", "binary engagement masks from a fit");
    fs::path eng_out, eng_fit, eng_prior;
    std::vector<double> eng_z;
    double eng_alpha = 0.05;
    std::string eng_corr = "bonferroni";
    eng->add_option("--out", eng_out, "output directory")->required();
    eng->add_option("--fit", eng_fit, "fit bundle directory")->required();
    eng->add_option("--prior", eng_prior, "prior bundle directory")->required();
    eng->add_option("--z", eng_z, "effect-size levels (repeatable; default 0 1 2 3)");
    eng->add_option("--alpha", eng_alpha, "test level");
    eng->add_option("--correction", eng_corr, "bonferroni|none");

    // overlap
    auto* ovl = app.add_subcommand("overlap", "Dice overlap between two map sets");
    fs::path ovl_out, ovl_a;
    std::optional<fs::path> ovl_b;
    std::string ovl_akind = "maps", ovl_bkind = "maps";
    double ovl_z = 2.0;
    ovl->add_option("--out", ovl_out, "output directory")->required();
    ovl->add_option("--a", ovl_a, "first template/map set")->required();
    ovl->add_option("--a-kind", ovl_akind, "maps|parcellation");
    ovl->add_option("--b", ovl_b, "second set (defaults to --a)");
    ovl->add_option("--b-kind", ovl_bkind, "maps|parcellation");
    ovl->add_option("--z", ovl_z, "z threshold for continuous maps");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            scfg.geometry = bbm::geometry_from_string(sim_geometry);
            return run_simulate(sim_out, scfg, sim_snr);
        }
        if (est->parsed())
            return run_estimate_prior(est_out, est_list, est_template, est_tkind, est_gsr,
                                      est_scale, est_split, est_censor, est_fc, est_perms,
                                      est_var_floor, est_seed);
        if (fit->parsed()) {
            fcfg.fc_prior = bbm::fc_prior_choice_from_string(fit_fc);
            fcfg.noise_model = bbm::noise_model_from_string(fit_noise);
            return run_fit(fit_out, fit_data, fit_prior, fcfg,
                           static_cast<int>(fit_gsr_opt->count()), fit_gsr,
                           static_cast<int>(fit_scale_opt->count()), fit_scale);
        }
        if (eng->parsed())
            return run_engagements(eng_out, eng_fit, eng_prior, eng_z, eng_alpha, eng_corr);
        if (ovl->parsed())
            return run_overlap(ovl_out, ovl_a, ovl_akind, ovl_b, ovl_bkind, ovl_z);
    } catch (const bbm::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bbm::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
