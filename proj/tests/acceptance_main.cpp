// Acceptance suite: every release gate runs here with its tolerance pinned
// in code, printing one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "icc/bridge_discrete.hpp"
#include "icc/errors.hpp"
#include "icc/estimators.hpp"
#include "icc/linear_icc.hpp"
#include "icc/oracle_suite.hpp"
#include "icc/pipelines.hpp"
#include "icc/sieve_bridge.hpp"
#include "icc/synth.hpp"

#include "support/linear_moment_oracle.hpp"

namespace fs = std::filesystem;
using namespace icc;

namespace {

int criteria_failed = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++criteria_failed;
    std::printf("%s  criterion %2d  %-38s %s\n", pass ? "PASS" : "FAIL", number,
                name.c_str(), detail.c_str());
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

struct OutcomeSuite {
    std::vector<synth::DiscretePopulation> pops;
    std::vector<suite::OutcomeRouteCheck> checks;
};

// Criterion 1 population family: d_A = 2, d_U cycling 1..3, d_W = d_U + 1,
// d_Z = d_A * d_U + 1, seeds 1..20.
OutcomeSuite build_outcome_suite() {
    OutcomeSuite s;
    ContrastSpec c = ate_contrast(1, 0);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::size_t d_u = 1 + (seed - 1) % 3;
        std::size_t d_w = d_u + 1;
        std::size_t d_z = 2 * d_u + 1;
        s.pops.push_back(synth::random_population(d_u, d_z, 2, d_w, seed));
        s.checks.push_back(suite::check_outcome_route(s.pops.back(), c, 1e-8));
    }
    return s;
}

OutcomeSuite g_outcome_suite;

void criterion_1(double* elapsed_s) {
    auto t0 = std::chrono::steady_clock::now();
    g_outcome_suite = build_outcome_suite();
    double worst = 0.0;
    bool ranks_ok = true;
    for (const auto& check : g_outcome_suite.checks) {
        ranks_ok = ranks_ok && check.rank_w_ok && check.rank_z_ok && check.solution.valid();
        worst = std::max(worst, std::abs(check.j_bridge - check.j_true));
    }
    *elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, "discrete outcome-bridge identification",
           ranks_ok && worst < 1e-10 && *elapsed_s < 5.0,
           "max |J - truth| = " + fmt(worst) + ", ranks " + (ranks_ok ? "ok" : "FAILED") +
               ", " + fmt(*elapsed_s) + " s");
}

void criterion_2() {
    ContrastSpec c = ate_contrast(1, 0);
    double worst = 0.0;
    std::size_t with_null = 0;
    for (std::size_t i = 0; i < g_outcome_suite.pops.size(); ++i) {
        const auto& check = g_outcome_suite.checks[i];
        if (check.nullspace_dim == 0) continue;
        ++with_null;
        double shift = suite::max_nullspace_effect_shift(g_outcome_suite.pops[i], c, check,
                                                         10, 1.0, 1000 + i);
        worst = std::max(worst, shift);
    }
    report(2, "null-space invariance of the effect", with_null > 0 && worst < 1e-8,
           "max |dJ| = " + fmt(worst) + " over " + std::to_string(with_null) +
               " populations x 10 perturbations");
}

void criterion_3() {
    double worst = 0.0;
    for (const auto& check : g_outcome_suite.checks)
        worst = std::max({worst, check.latent_in_observed_residual,
                          check.observed_in_latent_residual});
    report(3, "latent/observed bridge-set equivalence", worst < 1e-10,
           "max cross-system residual = " + fmt(worst));
}

struct FirstStageSuite {
    std::vector<synth::FirstStagePopulation> pops;
    std::vector<ContrastSpec> contrasts;
};

FirstStageSuite g_fs_suite;

void build_first_stage_suite() {
    for (std::uint64_t seed = 11; seed <= 15; ++seed) {
        synth::MonotoneFixtureSpec spec;
        spec.seed = seed;
        spec.d_u = (seed % 2 == 0) ? 3 : 2;
        spec.d_w0 = spec.d_u + 1;
        spec.d_w1 = spec.d_u + 1;
        g_fs_suite.pops.push_back(synth::monotone_population(spec));
        g_fs_suite.contrasts.push_back(
            suite::default_first_stage_contrast(g_fs_suite.pops.back(), 21));
    }
}

void criterion_4() {
    double worst_oracle = 0.0, worst_bridge = 0.0;
    bool all_valid = true;
    for (std::size_t i = 0; i < g_fs_suite.pops.size(); ++i) {
        const auto& fs = g_fs_suite.pops[i];
        const auto& c = g_fs_suite.contrasts[i];
        auto oracle =
            suite::check_first_stage_route(fs, c, 21, suite::ControlSource::oracle_v43);
        all_valid = all_valid && oracle.bridges_valid;
        worst_oracle = std::max({worst_oracle, std::abs(oracle.ipw - oracle.oracle_effect),
                                 std::abs(oracle.reg - oracle.oracle_effect),
                                 std::abs(oracle.dr - oracle.oracle_effect)});
        auto tk = suite::check_first_stage_route(fs, c, 21, suite::ControlSource::tau_kappa);
        all_valid = all_valid && tk.bridges_valid && tk.kappa_all_valid;
        worst_bridge = std::max({worst_bridge, std::abs(tk.ipw - tk.oracle_effect),
                                 std::abs(tk.reg - tk.oracle_effect),
                                 std::abs(tk.dr - tk.oracle_effect)});
    }
    report(4, "first-stage route identification",
           all_valid && worst_oracle < 1e-8 && worst_bridge < 1e-6,
           "oracle-control max err = " + fmt(worst_oracle) +
               ", bridge-control max err = " + fmt(worst_bridge));
}

void criterion_5() {
    double worst = 0.0;
    for (std::size_t i = 0; i < g_fs_suite.pops.size(); ++i) {
        auto rows = suite::first_stage_rows(g_fs_suite.pops[i], 21,
                                            suite::ControlSource::tau_kappa, 1e-8);
        worst = std::max(worst, rows.tau_identity_max_err);
    }
    report(5, "control-quantity identity", worst < 1e-10,
           "max |tau-based V - U-averaged CDF| = " + fmt(worst));
}

void criterion_6() {
    double worst = 0.0;
    for (std::size_t i = 0; i < g_fs_suite.pops.size(); ++i) {
        auto check =
            suite::check_surrogate_reg(g_fs_suite.pops[i], g_fs_suite.contrasts[i], 21);
        worst = std::max(worst, std::abs(check.reg_oracle_v - check.reg_v43));
    }
    report(6, "surrogate-control validity", worst < 1e-6,
           "max |REG(V~,U) - REG(V,U)| = " + fmt(worst));
}

void criterion_7() {
    double worst_diff = 0.0;
    for (std::size_t i = 0; i < g_fs_suite.pops.size(); ++i) {
        auto check = suite::check_bias_identities(g_fs_suite.pops[i],
                                                  g_fs_suite.contrasts[i], 21, 10, 500 + i);
        worst_diff = std::max({worst_diff, check.max_abs_diff, check.valid_plugin_max_bias});
    }
    report(7, "plug-in bias identities", worst_diff < 1e-10,
           "max |lhs - rhs| = " + fmt(worst_diff));
}

void criterion_8() {
    auto t0 = std::chrono::steady_clock::now();
    auto spec = synth::LinearDGPSpec::confounded_example();
    const double oracle_2sls_bias = icc_test::kConfounded2slsBeta - 1.0;

    std::vector<std::string> names = {"ols", "2sls", "icc"};
    auto table = estimators::run_mc(
        names, 1.0, 500, 2000, 77, [&](std::uint64_t rep_seed) {
            estimators::McReplication out;
            Dataset ds = synth::sample_linear(spec, 2000, rep_seed);
            for (const auto& name : names) {
                try {
                    auto rep = pipelines::estimate_linear(ds, name, 1);
                    out.emplace_back(std::make_pair(rep.j_hat, rep.se));
                } catch (const error&) {
                    out.emplace_back(std::nullopt);
                }
            }
            return out;
        });
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto& tsls = table.rows[1];
    const auto& icc_row = table.rows[2];
    bool bias_ok = std::abs(icc_row.bias) < 0.02;
    bool tsls_ok = std::abs(tsls.bias - oracle_2sls_bias) < 0.02;
    bool oracle_big = std::abs(oracle_2sls_bias) > 0.1;
    bool coverage_ok = icc_row.coverage && *icc_row.coverage >= 0.92 &&
                       *icc_row.coverage <= 0.97;
    bool se_ok = icc_row.mean_se && icc_row.sd > 0.0 &&
                 *icc_row.mean_se / icc_row.sd > 0.9 && *icc_row.mean_se / icc_row.sd < 1.1;
    bool time_ok = elapsed < 60.0;
    report(8, "linear estimator Monte Carlo",
           bias_ok && tsls_ok && oracle_big && coverage_ok && se_ok && time_ok,
           "bias(icc) = " + fmt(icc_row.bias) + ", bias(2sls) = " + fmt(tsls.bias) +
               " vs oracle " + fmt(oracle_2sls_bias) + ", coverage = " +
               fmt(icc_row.coverage.value_or(-1)) + ", se/sd = " +
               fmt(icc_row.mean_se.value_or(0) / icc_row.sd) + ", " + fmt(elapsed) + " s");
}

void criterion_9() {
    auto spec = synth::LinearDGPSpec::confounded_example();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Dataset ds = synth::sample_linear(spec, 300 + 7 * seed, 7000 + seed);
        auto parts = pipelines::linear_parts(ds);
        auto direct = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 1);
        auto control = linear::fit_icc_control_form(parts.y, parts.a, parts.z, parts.w, 1);
        auto staged = linear::fit_icc_two_stage(parts.y, parts.a, parts.z, parts.w, 1);
        worst = std::max({worst, std::abs(direct.beta_hat[0] - control.beta_hat[0]),
                          std::abs(direct.beta_hat[0] - staged.beta_hat[0])});
    }
    report(9, "numerical equivalence of the three forms", worst < 1e-10,
           "max |beta difference| = " + fmt(worst) + " over 50 datasets");
}

void criterion_10() {
    // Indicator bases reproduce the discrete solver on the seed-7 family.
    auto pop = synth::random_population(2, 5, 2, 3, 7);
    auto p_aw_z = synth::cond_matrix(pop, {synth::Axis::A, synth::Axis::W}, {synth::Axis::Z});
    auto sol = bridge::solve_outcome_bridge(p_aw_z, pop.ey_given_z(), 1e-8);
    linalg::Matrix m_cb(pop.d_z, pop.d_a * pop.d_w);
    std::vector<double> c_y(pop.d_z, 0.0);
    for (std::size_t u = 0; u < pop.d_u; ++u)
        for (std::size_t z = 0; z < pop.d_z; ++z)
            for (std::size_t a = 0; a < pop.d_a; ++a)
                for (std::size_t w = 0; w < pop.d_w; ++w) {
                    double mass = pop.prob(u, z, a, w);
                    m_cb(z, a * pop.d_w + w) += mass;
                    c_y[z] += mass * pop.k0_at(a, u);
                }
    auto fit = sieve::fit_sieve_from_moments(m_cb, c_y, 0.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < sol.coeffs.size(); ++i)
        worst = std::max(worst, std::abs(fit.theta[i] - sol.coeffs[i]));

    // Sieve effect on the confounded example's exact moments equals 1.
    auto pm = icc_test::moment_oracle(synth::LinearDGPSpec::confounded_example());
    linalg::Matrix m2(3, 3);
    m2(0, 0) = 1.0;
    m2(1, 1) = pm.m(2, 1);
    m2(1, 2) = pm.m(2, 4);
    m2(2, 1) = pm.m(3, 1);
    m2(2, 2) = pm.m(3, 4);
    std::vector<double> cy2 = {0.0, pm.m(2, 0), pm.m(3, 0)};
    auto lin_fit = sieve::fit_sieve_from_moments(m2, cy2, 0.0);
    lin_fit.basis_h = sieve::BasisSpec::poly({1, 1});
    linalg::Matrix w_sample(1, 1, 0.0);
    double j = sieve::effect_from_sieve(lin_fit, w_sample, ate_contrast(1, 0)).j_hat;

    report(10, "sieve/discrete cross-oracle", worst < 1e-10 && std::abs(j - 1.0) < 1e-12,
           "max coefficient gap = " + fmt(worst) + ", sieve effect = " + fmt(j));
}

int run_cli(const std::string& args) {
    fs::path out_file = fs::temp_directory_path() / "icc_acc_out.txt";
    std::string cmd =
        std::string(ICC_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_11() {
    // Library level: the proxy-poor population is reported invalid.
    auto bad = synth::random_population(3, 7, 2, 2, 21);
    auto check = suite::check_outcome_route(bad, ate_contrast(1, 0));
    bool invalid_flagged = !check.solution.valid() && !check.rank_w_ok;

    // CLI level: estimating on data drawn from it exits with code 3.
    fs::path dir = fs::temp_directory_path() / "icc_acceptance";
    fs::create_directories(dir);
    write_file(dir / "sim_bad.json", R"({
      "dgp": {"kind": "discrete", "d_u": 3, "d_z": 7, "d_a": 2, "d_w": 2, "seed": 21},
      "n": 60000, "seed": 400, "out": ")" + (dir / "bad").string() + R"("})");
    bool sim_ok = run_cli("simulate --config " + (dir / "sim_bad.json").string()) == 0;
    write_file(dir / "est_bad.json", R"({
      "data": {"csv": ")" + (dir / "bad" / "dataset.csv").string() + R"(",
        "roles": {"y": "outcome", "a": {"role": "treatment", "kind": "categorical"},
                   "z": {"role": "instrument", "kind": "categorical"},
                   "w": {"role": "outcome_proxy", "kind": "categorical"}}},
      "method": "discrete", "contrast": {"a1": 1, "a0": 0}, "options": {"tol": 0.05}})");
    int code = run_cli("estimate --config " + (dir / "est_bad.json").string());

    // Zero-propensity cell: deterministic a = 1{v > 0.5} leaves control bins
    // with a single arm. Library throws support_error; the CLI exits 3.
    bool support_thrown = false;
    try {
        estimators::DiscreteRows rows;
        rows.n_vbins = 2;
        rows.n_z = 2;
        rows.n_w = 2;
        rows.n_u = 0;
        for (int i = 0; i < 100; ++i) {
            double v = (i % 50 + 0.5) / 50.0;
            rows.weight.push_back(0.01);
            rows.a.push_back(v > 0.5 ? 1.0 : 0.0);
            rows.vbin.push_back(v > 0.5 ? 1 : 0);
            rows.y.push_back(v);
            rows.z.push_back(i % 2);
            rows.w.push_back((i / 2) % 2);
            rows.u.push_back(-1);
        }
        estimators::solve_tilde_bridges(rows, ate_contrast(1, 0), 1e-8);
    } catch (const support_error&) {
        support_thrown = true;
    }

    std::ostringstream csv;
    csv << "y,a,z,w0,w1\n";
    for (int i = 0; i < 600; ++i) {
        double v = (i % 100 + 0.5) / 100.0;
        int a = v > 0.5 ? 1 : 0;
        csv << v << "," << a << "," << (i % 3) << "," << (i % 2) << "," << ((i / 3) % 2)
            << "\n";
    }
    write_file(dir / "det.csv", csv.str());
    write_file(dir / "est_det.json", R"({
      "data": {"csv": ")" + (dir / "det.csv").string() + R"(",
        "roles": {"y": "outcome", "a": {"role": "treatment", "kind": "categorical"},
                   "z": {"role": "instrument", "kind": "categorical"},
                   "w0": {"role": "proxy_w0", "kind": "categorical"},
                   "w1": {"role": "proxy_w1", "kind": "categorical"}}},
      "method": "first-stage", "contrast": {"a1": 1, "a0": 0},
      "options": {"bins": 2, "tol": 0.5, "control": "empirical"}})");
    int det_code = run_cli("estimate --config " + (dir / "est_det.json").string());

    report(11, "failure-mode detection",
           invalid_flagged && sim_ok && code == 3 && support_thrown && det_code == 3,
           std::string("bridge invalid ") + (invalid_flagged ? "yes" : "NO") +
               ", estimate exit = " + std::to_string(code) + ", support error " +
               (support_thrown ? "thrown" : "MISSING") + ", deterministic-arm exit = " +
               std::to_string(det_code));
}

void criterion_12() {
    fs::path dir = fs::temp_directory_path() / "icc_acceptance";
    fs::create_directories(dir);
    write_file(dir / "mc.json", R"({
      "dgp": {"kind": "linear", "preset": "confounded"},
      "estimators": ["ols", "2sls", "icc"],
      "replications": 5, "n": 400, "seed": 9,
      "options": {"rank": 1},
      "out": ")" + (dir / "mc_a").string() + R"("})");
    bool run1 = run_cli("mc --config " + (dir / "mc.json").string()) == 0;
    bool run2 = run_cli("mc --config " + (dir / "mc.json").string() + " --out " +
                        (dir / "mc_b").string()) == 0;
    bool csv_same = slurp(dir / "mc_a" / "mc.csv") == slurp(dir / "mc_b" / "mc.csv");
    bool md_same = slurp(dir / "mc_a" / "mc.md") == slurp(dir / "mc_b" / "mc.md");
    report(12, "Monte Carlo determinism", run1 && run2 && csv_same && md_same,
           std::string("reruns byte-identical: csv ") + (csv_same ? "yes" : "NO") +
               ", md " + (md_same ? "yes" : "NO"));
}

}  // namespace

int main() {
    double elapsed = 0.0;
    criterion_1(&elapsed);
    criterion_2();
    criterion_3();
    build_first_stage_suite();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    criterion_12();

    if (criteria_failed == 0) {
        std::printf("acceptance: all 12 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", criteria_failed);
    return 1;
}
