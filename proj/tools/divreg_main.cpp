#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "divreg/gradcheck.hpp"
#include "divreg/harness.hpp"

namespace {

int cmd_run(const std::string& config_path) {
    divreg::ExperimentConfig cfg = divreg::load_config(config_path);
    auto results = divreg::run_experiment(cfg);
    std::cout << divreg::results_csv_header() << "\n";
    for (const auto& r : results) std::cout << divreg::to_csv_row(r) << "\n";
    std::cout << "wrote " << divreg::resolve_output_path(cfg.output) << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& l1, const std::string& l2,
              const std::string& g, unsigned jobs) {
    divreg::ExperimentConfig cfg = divreg::load_config(config_path);
    divreg::SweepGrid grid;
    auto parse_axis = [](const std::string& csv, std::vector<double>& out) {
        std::string cur;
        for (char ch : csv + ",") {
            if (ch == ',') {
                if (!cur.empty()) out.push_back(std::stod(cur));
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
    };
    parse_axis(l1, grid.lambda1s);
    parse_axis(l2, grid.lambda2s);
    parse_axis(g, grid.gammas);
    auto results = divreg::sweep(cfg, grid, jobs);
    std::cout << results.size() << " rows in " << divreg::resolve_output_path(cfg.output) << "\n";
    return 0;
}

int cmd_gradcheck(double tol) {
    divreg::GradCheckReport report = divreg::run_gradcheck(tol);
    std::cout << report.format();
    return report.all_pass() ? 0 : 1;
}

int cmd_dump_sim(const std::string& config_path, const std::string& out_path) {
    divreg::ExperimentConfig cfg = divreg::load_config(config_path);
    divreg::PreparedData data = divreg::prepare_dataset(cfg.dataset);
    const divreg::RegularizerSpec& reg = cfg.regularizers.front();
    std::optional<divreg::Mlp> model;
    divreg::RunResult r = divreg::run_single(data, cfg, reg, cfg.seeds.front(), &model);

    const divreg::Dataset& eval_ds = data.parts.test.size() > 0 ? data.parts.test : data.parts.train;
    double gamma = reg.variant == divreg::RegVariant::None ? 10.0 : reg.gamma;
    divreg::dump_similarity(*model, eval_ds, gamma, out_path);
    std::cout << "variant=" << divreg::variant_name(r.variant) << " test_err="
              << divreg::fmt_double(r.test_err) << "\n";
    std::cout << "wrote " << divreg::resolve_output_path(out_path) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Within-layer activation-diversity regularization experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string grid_l1, grid_l2, grid_g;
    unsigned jobs = 1;
    double tol = 1e-5;

    auto* run = app.add_subcommand("run", "Run every (regularizer, seed) of a config");
    run->add_option("config", config_path, "experiment config (JSON)")->required();

    auto* sw = app.add_subcommand("sweep", "Hyperparameter grid sweep (resumes completed rows)");
    sw->add_option("config", config_path, "experiment config (JSON)")->required();
    sw->add_option("--lambda1", grid_l1, "comma-separated lambda1 grid");
    sw->add_option("--lambda2", grid_l2, "comma-separated lambda2 grid");
    sw->add_option("--gamma", grid_g, "comma-separated gamma grid");
    sw->add_option("--jobs", jobs, "concurrent runs");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    gc->add_option("--tol", tol, "max relative error tolerance");

    auto* ds = app.add_subcommand("dump-sim", "Train per config, dump the feature similarity matrix");
    ds->add_option("config", config_path, "experiment config (JSON)")->required();
    ds->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (sw->parsed()) return cmd_sweep(config_path, grid_l1, grid_l2, grid_g, jobs);
        if (gc->parsed()) return cmd_gradcheck(tol);
        if (ds->parsed()) return cmd_dump_sim(config_path, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
