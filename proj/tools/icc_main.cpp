// Command-line surface: simulate | estimate | mc | oracle-check | checklist.
// Configs are JSON; flags override config keys. Exit codes: 0 success,
// 1 oracle-check failure, 2 config error, 3 identification error,
// 4 internal error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "icc/config_json.hpp"
#include "icc/data_model.hpp"
#include "icc/errors.hpp"
#include "icc/estimators.hpp"
#include "icc/oracle_suite.hpp"
#include "icc/pipelines.hpp"
#include "icc/synth.hpp"

namespace fs = std::filesystem;
using icc::config::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::string out_dir;
    bool as_json = false;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw icc::config_error("an output directory is required (--out or 'out')");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw icc::config_error("cannot create output directory " + dir);
}

std::string resolve_out(const CommonFlags& flags, const json& cfg) {
    if (!flags.out_dir.empty()) return flags.out_dir;
    return cfg.value("out", "");
}

std::uint64_t resolve_seed(const CommonFlags& flags, const json& cfg, bool required) {
    if (flags.seed) return static_cast<std::uint64_t>(*flags.seed);
    if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
    if (required) throw icc::config_error("missing 'seed' (stochastic steps require one)");
    return 0;
}

json role_map_json(const icc::Dataset& ds) {
    json roles = json::object();
    for (const auto& col : ds.columns) {
        json entry;
        entry["role"] = icc::role_name(col.role);
        entry["kind"] =
            col.kind == icc::ColumnKind::categorical ? "categorical" : "continuous";
        roles[col.name] = entry;
    }
    return roles;
}

int cmd_simulate(const CommonFlags& flags) {
    json cfg = icc::config::load_config(flags.config_path);
    if (!cfg.contains("dgp")) throw icc::config_error("simulate config needs a 'dgp' section");
    icc::config::DgpSpec dgp = icc::config::parse_dgp(cfg.at("dgp"));
    std::uint64_t seed = resolve_seed(flags, cfg, /*required=*/true);
    auto n = cfg.value("n", std::size_t{1000});
    std::string out = resolve_out(flags, cfg);
    ensure_out_dir(out);

    icc::Dataset ds;
    json truth;
    switch (dgp.kind) {
        case icc::config::DgpSpec::Kind::linear: {
            ds = icc::synth::sample_linear(dgp.linear, n, seed);
            truth["beta"] = dgp.linear.beta;
            break;
        }
        case icc::config::DgpSpec::Kind::discrete: {
            icc::synth::DiscretePopulation pop = icc::synth::random_population(
                dgp.discrete.d_u, dgp.discrete.d_z, dgp.discrete.d_a, dgp.discrete.d_w,
                dgp.discrete.seed, dgp.discrete.support_floor);
            pop.y_noise_sd = dgp.discrete.y_noise_sd;
            ds = icc::synth::sample_discrete(pop, n, seed);
            icc::ContrastSpec c = icc::config::parse_contrast(
                cfg.contains("contrast") ? cfg.at("contrast") : json());
            truth["j"] = icc::synth::true_J(pop, c);
            truth["contrast"] = {{"a1", c.support.back()}, {"a0", c.support.front()}};
            break;
        }
        case icc::config::DgpSpec::Kind::monotone: {
            icc::synth::FirstStagePopulation pop =
                icc::synth::monotone_population(dgp.monotone);
            ds = icc::synth::sample_monotone(pop, n, seed);
            icc::ContrastSpec c;
            if (cfg.contains("contrast"))
                c = icc::config::parse_contrast(cfg.at("contrast"));
            else
                c = icc::suite::default_first_stage_contrast(pop, dgp.monotone.n_blocks);
            truth["j"] = pop.oracle_effect(c);
            truth["contrast"] = {{"a1", c.support.back()}, {"a0", c.support.front()}};
            break;
        }
    }

    std::ofstream csv(fs::path(out) / "dataset.csv");
    icc::write_csv(csv, ds);

    json sidecar;
    sidecar["dgp"] = icc::config::dgp_to_json(dgp);
    sidecar["n"] = n;
    sidecar["seed"] = seed;
    sidecar["truth"] = truth;
    sidecar["roles"] = role_map_json(ds);
    std::ofstream sc(fs::path(out) / "truth.json");
    sc << sidecar.dump(2) << "\n";

    std::cout << "wrote " << (fs::path(out) / "dataset.csv").string() << " (" << ds.n()
              << " rows) and truth.json\n";
    return 0;
}

void write_reports(const std::string& out, const std::vector<icc::estimators::EstimateReport>& reps) {
    ensure_out_dir(out);
    std::ofstream csv(fs::path(out) / "report.csv");
    csv << "estimator,j_hat,se,n_used,diagnostic,value\n";
    for (const auto& rep : reps) {
        std::string base = rep.estimator + "," + fmt(rep.j_hat) + "," +
                           (rep.se ? fmt(*rep.se) : std::string("")) + "," +
                           std::to_string(rep.n_used);
        if (rep.diagnostics.empty()) {
            csv << base << ",,\n";
        } else {
            for (const auto& [name, value] : rep.diagnostics)
                csv << base << "," << name << "," << fmt(value) << "\n";
        }
    }
    std::ofstream md(fs::path(out) / "report.md");
    md << "| estimator | estimate | se | n |\n|---|---|---|---|\n";
    for (const auto& rep : reps)
        md << "| " << rep.estimator << " | " << fmt(rep.j_hat) << " | "
           << (rep.se ? fmt(*rep.se) : std::string("-")) << " | " << rep.n_used << " |\n";
    md << "\ndiagnostics\n\n";
    for (const auto& rep : reps)
        for (const auto& [name, value] : rep.diagnostics)
            md << "- " << rep.estimator << "." << name << " = " << fmt(value) << "\n";
}

int cmd_estimate(const CommonFlags& flags) {
    json cfg = icc::config::load_config(flags.config_path);
    if (!cfg.contains("data") || !cfg.at("data").contains("csv"))
        throw icc::config_error("estimate config needs data.csv");
    if (!cfg.at("data").contains("roles"))
        throw icc::config_error("estimate config needs data.roles");
    std::string csv_path = cfg.at("data").at("csv").get<std::string>();
    auto roles = icc::config::parse_role_map(cfg.at("data").at("roles"));
    icc::Dataset ds = icc::load_csv(csv_path, roles);
    ds = icc::encode_categorical(ds);
    for (const auto& warning : ds.warnings) std::cerr << "warning: " << warning << "\n";

    std::string method = cfg.value("method", "linear");
    json options = cfg.value("options", json::object());
    icc::ContrastSpec contrast =
        icc::config::parse_contrast(cfg.contains("contrast") ? cfg.at("contrast") : json());
    std::string out = resolve_out(flags, cfg);

    std::vector<icc::estimators::EstimateReport> reports;
    if (method == "linear") {
        std::optional<std::size_t> rank;
        if (options.contains("rank")) rank = options.at("rank").get<std::size_t>();
        std::string estimator = options.value("estimator", "icc");
        reports.push_back(icc::pipelines::estimate_linear(ds, estimator, rank));
    } else if (method == "discrete") {
        double tol = icc::config::get_or(options, "tol", 0.05);
        reports.push_back(icc::pipelines::estimate_discrete_outcome(ds, contrast, tol));
    } else if (method == "first-stage") {
        double tol = icc::config::get_or(options, "tol", 0.05);
        auto bins = icc::config::get_index(options, "bins", 5);
        std::string control = options.value("control", "bridge");
        icc::pipelines::FirstStageReports fsr =
            icc::pipelines::estimate_first_stage(ds, contrast, bins, tol, control);
        fsr.ipw.diagnostics.emplace_back("tau_max_residual", fsr.tau_max_residual);
        fsr.ipw.diagnostics.emplace_back("clip_total", fsr.clip_total);
        reports.push_back(fsr.ipw);
        reports.push_back(fsr.reg);
        reports.push_back(fsr.dr);
    } else if (method == "sieve") {
        int degree_h = static_cast<int>(icc::config::get_index(options, "degree_h", 1));
        int degree_z = static_cast<int>(icc::config::get_index(options, "degree_z", 2));
        double ridge = icc::config::get_or(options, "ridge", 0.0);
        reports.push_back(
            icc::pipelines::estimate_sieve(ds, contrast, degree_h, degree_z, ridge));
    } else {
        throw icc::config_error("unknown method '" + method + "'");
    }

    if (!out.empty()) write_reports(out, reports);
    for (const auto& rep : reports) {
        std::cout << rep.estimator << ": " << fmt(rep.j_hat);
        if (rep.se) std::cout << " (se " << fmt(*rep.se) << ")";
        std::cout << "\n";
        for (const auto& [name, value] : rep.diagnostics)
            std::cout << "  " << name << " = " << fmt(value) << "\n";
    }
    return 0;
}

int cmd_mc(const CommonFlags& flags) {
    json cfg = icc::config::load_config(flags.config_path);
    if (!cfg.contains("dgp")) throw icc::config_error("mc config needs a 'dgp' section");
    icc::config::DgpSpec dgp = icc::config::parse_dgp(cfg.at("dgp"));
    std::uint64_t seed = resolve_seed(flags, cfg, /*required=*/true);
    auto r_total = cfg.value("replications", std::size_t{100});
    auto n = cfg.value("n", std::size_t{1000});
    json options = cfg.value("options", json::object());
    std::vector<std::string> estimators_list;
    if (cfg.contains("estimators"))
        estimators_list = cfg.at("estimators").get<std::vector<std::string>>();

    icc::estimators::McTable table;
    if (dgp.kind == icc::config::DgpSpec::Kind::linear) {
        if (estimators_list.empty()) estimators_list = {"ols", "2sls", "icc"};
        std::optional<std::size_t> rank;
        if (options.contains("rank")) rank = options.at("rank").get<std::size_t>();
        const icc::synth::LinearDGPSpec spec = dgp.linear;
        double truth = spec.beta[0];
        table = icc::estimators::run_mc(
            estimators_list, truth, r_total, n, seed,
            [&](std::uint64_t rep_seed) {
                icc::estimators::McReplication result;
                icc::Dataset ds = icc::synth::sample_linear(spec, n, rep_seed);
                for (const auto& name : estimators_list) {
                    try {
                        icc::estimators::EstimateReport rep =
                            icc::pipelines::estimate_linear(ds, name, rank);
                        result.emplace_back(std::make_pair(rep.j_hat, rep.se));
                    } catch (const icc::error&) {
                        result.emplace_back(std::nullopt);
                    }
                }
                return result;
            });
    } else if (dgp.kind == icc::config::DgpSpec::Kind::discrete) {
        if (estimators_list.empty()) estimators_list = {"outcome_bridge"};
        icc::synth::DiscretePopulation pop = icc::synth::random_population(
            dgp.discrete.d_u, dgp.discrete.d_z, dgp.discrete.d_a, dgp.discrete.d_w,
            dgp.discrete.seed, dgp.discrete.support_floor);
        pop.y_noise_sd = dgp.discrete.y_noise_sd;
        icc::ContrastSpec contrast = icc::config::parse_contrast(
            cfg.contains("contrast") ? cfg.at("contrast") : json());
        double truth = icc::synth::true_J(pop, contrast);
        double tol = icc::config::get_or(options, "tol", 0.05);
        table = icc::estimators::run_mc(
            estimators_list, truth, r_total, n, seed,
            [&](std::uint64_t rep_seed) {
                icc::estimators::McReplication result;
                icc::Dataset ds = icc::synth::sample_discrete(pop, n, rep_seed);
                for (const auto& name : estimators_list) {
                    (void)name;
                    try {
                        icc::estimators::EstimateReport rep =
                            icc::pipelines::estimate_discrete_outcome(ds, contrast, tol);
                        result.emplace_back(
                            std::make_pair(rep.j_hat, std::optional<double>()));
                    } catch (const icc::error&) {
                        result.emplace_back(std::nullopt);
                    }
                }
                return result;
            });
    } else {
        throw icc::config_error("mc supports linear and discrete dgps");
    }

    std::string out = resolve_out(flags, cfg);
    if (!out.empty()) {
        ensure_out_dir(out);
        std::ofstream csv(fs::path(out) / "mc.csv");
        icc::estimators::write_mc_csv(csv, table);
        std::ofstream md(fs::path(out) / "mc.md");
        icc::estimators::write_mc_markdown(md, table);
    }
    std::ostringstream os;
    icc::estimators::write_mc_markdown(os, table);
    std::cout << os.str();
    return 0;
}

struct CheckLine {
    std::string name;
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

int cmd_oracle_check(const CommonFlags& flags) {
    json cfg = icc::config::load_config(flags.config_path);
    if (!cfg.contains("populations") || !cfg.at("populations").is_array() ||
        cfg.at("populations").empty())
        throw icc::config_error("oracle-check config needs a non-empty 'populations' array");

    std::vector<CheckLine> lines;
    auto add = [&](const std::string& name, bool pass, double value, const char* metric) {
        CheckLine line;
        line.name = name;
        line.pass = pass;
        line.detail = std::string(metric) + "=" + fmt(value);
        lines.push_back(line);
    };

    for (const auto& jp : cfg.at("populations")) {
        icc::config::DgpSpec dgp = icc::config::parse_dgp(jp);
        if (dgp.kind == icc::config::DgpSpec::Kind::discrete) {
            std::string tag = "discrete[seed=" + std::to_string(dgp.discrete.seed) + "]";
            icc::synth::DiscretePopulation pop = icc::synth::random_population(
                dgp.discrete.d_u, dgp.discrete.d_z, dgp.discrete.d_a, dgp.discrete.d_w,
                dgp.discrete.seed, dgp.discrete.support_floor);
            icc::ContrastSpec c = icc::config::parse_contrast(
                jp.contains("contrast") ? jp.at("contrast") : json());
            icc::suite::OutcomeRouteCheck check;
            try {
                check = icc::suite::check_outcome_route(pop, c, 1e-8);
            } catch (const icc::error& e) {
                CheckLine line;
                line.name = tag + " outcome route";
                line.pass = false;
                line.detail = e.what();
                lines.push_back(line);
                continue;
            }
            add(tag + " bridge residual", check.solution.valid(), check.bridge_residual,
                "residual");
            if (check.solution.valid())
                add(tag + " effect vs truth", std::abs(check.j_bridge - check.j_true) < 1e-10,
                    std::abs(check.j_bridge - check.j_true), "abs_err");
            if (check.rank_w_ok && check.rank_z_ok) {
                double cross = std::max(check.latent_in_observed_residual,
                                        check.observed_in_latent_residual);
                add(tag + " latent/observed equivalence", cross < 1e-10, cross, "residual");
            } else {
                CheckLine line;
                line.name = tag + " latent/observed equivalence";
                line.skipped = true;
                line.pass = true;
                line.detail = "skipped: completeness rank check failed (rank_w=" +
                              std::to_string(check.rank_w) +
                              ", rank_z=" + std::to_string(check.rank_z) + ")";
                lines.push_back(line);
            }
            if (check.solution.valid() && check.nullspace_dim > 0) {
                double shift = icc::suite::max_nullspace_effect_shift(pop, c, check, 10, 1.0,
                                                                      dgp.discrete.seed + 1);
                add(tag + " null-space invariance", shift < 1e-8, shift, "max_shift");
            }
        } else if (dgp.kind == icc::config::DgpSpec::Kind::monotone) {
            std::string tag = "monotone[seed=" + std::to_string(dgp.monotone.seed) + "]";
            icc::synth::FirstStagePopulation pop =
                icc::synth::monotone_population(dgp.monotone);
            std::size_t bins = dgp.monotone.n_blocks;
            icc::ContrastSpec c =
                jp.contains("contrast")
                    ? icc::config::parse_contrast(jp.at("contrast"))
                    : icc::suite::default_first_stage_contrast(pop, bins);

            icc::suite::FirstStageCheck oracle = icc::suite::check_first_stage_route(
                pop, c, bins, icc::suite::ControlSource::oracle_v43, 1e-8);
            double worst = std::max({std::abs(oracle.ipw - oracle.oracle_effect),
                                     std::abs(oracle.reg - oracle.oracle_effect),
                                     std::abs(oracle.dr - oracle.oracle_effect)});
            add(tag + " estimator agreement (oracle control)", worst < 1e-8, worst, "max_err");

            icc::suite::FirstStageCheck tk = icc::suite::check_first_stage_route(
                pop, c, bins, icc::suite::ControlSource::tau_kappa, 1e-8);
            double worst_tk = std::max({std::abs(tk.ipw - tk.oracle_effect),
                                        std::abs(tk.reg - tk.oracle_effect),
                                        std::abs(tk.dr - tk.oracle_effect)});
            add(tag + " estimator agreement (bridge control)", worst_tk < 1e-6, worst_tk,
                "max_err");
            add(tag + " control-quantity identity", tk.tau_identity_max_err < 1e-10,
                tk.tau_identity_max_err, "max_err");
            add(tag + " kappa bridge valid", tk.kappa_all_valid, tk.kappa_all_valid ? 0.0 : 1.0,
                "invalid");

            icc::suite::SurrogateCheck sur = icc::suite::check_surrogate_reg(pop, c, bins);
            add(tag + " surrogate-control REG", std::abs(sur.reg_oracle_v - sur.reg_v43) < 1e-6,
                std::abs(sur.reg_oracle_v - sur.reg_v43), "abs_diff");

            icc::suite::BiasIdentityCheck bias =
                icc::suite::check_bias_identities(pop, c, bins, 10, dgp.monotone.seed + 3);
            add(tag + " bias identities", bias.max_abs_diff < 1e-10, bias.max_abs_diff,
                "max_abs_diff");
        } else {
            throw icc::config_error("oracle-check supports discrete and monotone populations");
        }
    }

    bool all_pass = true;
    for (const auto& line : lines) {
        std::string status = line.skipped ? "SKIP" : (line.pass ? "PASS" : "FAIL");
        if (!line.skipped && !line.pass) all_pass = false;
        std::cout << status << "  " << line.name << "  " << line.detail << "\n";
    }
    return all_pass ? 0 : 1;
}

int cmd_checklist(bool as_json) {
    struct Step {
        const char* name;
        const char* action;
        const char* condition;
    };
    const Step steps[4] = {
        {"Z exogeneity",
         "Define the common confounders U so that the instruments are excluded "
         "conditional on them.",
         "Y(a,z) = Y(a) independent of Z given U, for every treatment value a."},
        {"W exogeneity",
         "Include in U any unobserved variables needed to make the outcome-inducing "
         "proxies conditionally independent of treatment and instruments.",
         "W(a,z) = W independent of (A, Z) given U."},
        {"W relevance",
         "Check that the proxies are complete for the common confounders given "
         "treatment.",
         "E[g(A,U) | A, W] = 0 only when g(A,U) = 0, for any square-integrable g."},
        {"Z relevance",
         "Check that the instruments are complete for treatment and common "
         "confounders jointly.",
         "E[g(A,U) | Z] = 0 only when g(A,U) = 0, for any square-integrable g."},
    };
    if (as_json) {
        json out = json::array();
        for (int i = 0; i < 4; ++i) {
            json step;
            step["step"] = i + 1;
            step["name"] = steps[i].name;
            step["action"] = steps[i].action;
            step["condition"] = steps[i].condition;
            out.push_back(step);
        }
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << "Model-construction checklist:\n";
        for (int i = 0; i < 4; ++i) {
            std::cout << "  " << (i + 1) << ". " << steps[i].name << ": " << steps[i].action
                      << "\n     Condition: " << steps[i].condition << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instrumented-common-confounding estimators and oracles"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", flags.config_path, "Path to a JSON config");
        if (config_required) opt->required();
        sub->add_option("--seed", flags.seed, "Override the config seed");
        sub->add_option("--out", flags.out_dir, "Override the output directory");
        sub->add_flag("--json", flags.as_json, "Machine-readable output where supported");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "Draw a dataset and its ground truth");
    add_common(simulate, true);
    CLI::App* estimate = app.add_subcommand("estimate", "Run an estimator on a dataset");
    add_common(estimate, true);
    CLI::App* mc = app.add_subcommand("mc", "Monte Carlo study of the estimators");
    add_common(mc, true);
    CLI::App* oracle = app.add_subcommand("oracle-check", "Population-level invariant suite");
    add_common(oracle, true);
    CLI::App* checklist =
        app.add_subcommand("checklist", "Print the model-construction checklist");
    add_common(checklist, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(flags);
        if (estimate->parsed()) return cmd_estimate(flags);
        if (mc->parsed()) return cmd_mc(flags);
        if (oracle->parsed()) return cmd_oracle_check(flags);
        if (checklist->parsed()) return cmd_checklist(flags.as_json);
    } catch (const icc::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const icc::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const icc::schema_error& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 2;
    } catch (const icc::identification_error& e) {
        std::cerr << "identification error: " << e.what() << "\n";
        return 3;
    } catch (const icc::support_error& e) {
        std::cerr << "support error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
