#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "pic/config.hpp"
#include "pic/plot.hpp"

namespace fs = std::filesystem;

namespace {

pic::RunConfig load_run_config(const std::string& config_path,
                               const std::optional<uint64_t>& cli_seed) {
    pic::RunConfig cfg = pic::parse_config(config_path.empty() ? fs::path{} : fs::path(config_path));
    cfg.seed = pic::resolve_seed(cfg, cli_seed);
    cfg.seed_set = true;
    cfg.dataset.config_echo = cfg.to_json();
    return cfg;
}

int cmd_build_data(const std::string& source, const std::string& out,
                   const std::string& config_path, const std::optional<uint64_t>& seed) {
    const pic::RunConfig cfg = load_run_config(config_path, seed);
    const pic::Manifest m = pic::build_dataset(source, cfg.dataset, cfg.seed, out);
    std::cout << "wrote " << m.entries.size() << " samples to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out, const std::string& log_path,
              const std::optional<uint64_t>& seed, bool resume) {
    const pic::RunConfig cfg = load_run_config(config_path, seed);
    const pic::Manifest manifest = pic::load_manifest(fs::path(data) / "manifest.json");

    pic::TrainState<float> state;
    if (resume && fs::exists(out)) {
        state = pic::load_train_state(out);
    } else {
        state = pic::make_train_state<float>(cfg.model, cfg.train, cfg.seed);
    }

    std::ofstream log;
    std::ostream* log_stream = &std::cout;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw std::runtime_error("cannot write log: " + log_path);
        log_stream = &log;
    }
    const pic::TrainRunResult res = pic::train_run(state, manifest, data, out, log_stream);
    std::cout << "trained " << res.steps << " steps, first loss " << res.first_loss
              << ", last loss " << res.last_loss << ", checkpoint " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& strategy,
             const std::string& report_path, const std::string& csv_path, bool copy_baseline,
             const std::optional<uint64_t>& seed) {
    const pic::Manifest manifest = pic::load_manifest(fs::path(data) / "manifest.json");

    pic::BenchmarkOptions opts;
    opts.strategy = pic::strategy_from_name(strategy);
    opts.use_copy_baseline = copy_baseline;
    opts.seed = seed.value_or(0);
    if (manifest.config.contains("codebook_size")) {
        opts.codebook_size = manifest.config.at("codebook_size").get<int>();
    }

    pic::LoadedModel model;
    const pic::LoadedModel* model_ptr = nullptr;
    if (!copy_baseline) {
        if (ckpt.empty()) throw std::runtime_error("eval needs --ckpt or --copy-baseline");
        model = pic::load_model(ckpt);
        model_ptr = &model;
    }
    const pic::EvalReport rep = pic::run_benchmark(model_ptr, manifest, data, opts);

    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write report: " + report_path);
    out << rep.to_json().dump(2) << "\n";
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw std::runtime_error("cannot write csv: " + csv_path);
        rep.write_csv(csv);
    }
    std::cout << "evaluated " << rep.samples << " samples, report " << report_path << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& prompt_input,
              const std::string& prompt_target, const std::string& query,
              const std::string& out_path, const std::optional<uint64_t>& seed) {
    const pic::LoadedModel model = pic::load_model(ckpt);
    pic::TaskSample prompt;
    prompt.input = pic::load_cloud(prompt_input);
    prompt.target = pic::load_cloud(prompt_target);
    const pic::Points query_input = pic::load_cloud(query);
    const pic::Points pred =
        pic::infer(model.params, model.cfg, prompt, query_input, seed.value_or(0));
    pic::save_xyz(out_path, pred);
    std::cout << "wrote " << pred.rows() << " points to " << out_path << "\n";
    return 0;
}

int cmd_plot(const std::string& report, const std::string& out_dir) {
    const int files = pic::plot_report(report, out_dir);
    std::cout << "wrote " << files << " files to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point cloud in-context learning toolkit"};
    app.require_subcommand(1);

    std::optional<uint64_t> seed;
    std::string config_path, source, out, data, ckpt, strategy = "random";
    std::string report_path, csv_path, log_path;
    std::string prompt_input, prompt_target, query;
    bool copy_baseline = false, resume = false;

    auto* build = app.add_subcommand("build-data", "synthesize a task dataset from clouds");
    build->add_option("--source", source, "directory of source clouds")->required();
    build->add_option("--out", out, "output dataset directory")->required();
    build->add_option("--seed", seed, "random seed");
    build->add_option("--config", config_path, "config file");

    auto* train = app.add_subcommand("train", "train a model on a built dataset");
    train->add_option("--config", config_path, "config file");
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--out", out, "checkpoint path")->required();
    train->add_option("--log", log_path, "training log path (default stdout)");
    train->add_option("--seed", seed, "random seed");
    train->add_flag("--resume", resume, "continue from an existing checkpoint");

    auto* ev = app.add_subcommand("eval", "run the benchmark on the test split");
    ev->add_option("--ckpt", ckpt, "checkpoint path");
    ev->add_option("--data", data, "dataset directory")->required();
    ev->add_option("--strategy", strategy, "prompt strategy: random, class, cd");
    ev->add_option("--report", report_path, "output report.json")->required();
    ev->add_option("--csv", csv_path, "optional CSV export");
    ev->add_flag("--copy-baseline", copy_baseline, "evaluate the copy baseline, no checkpoint");
    ev->add_option("--seed", seed, "random seed");

    auto* inf = app.add_subcommand("infer", "run one in-context prediction");
    inf->add_option("--ckpt", ckpt, "checkpoint path")->required();
    inf->add_option("--prompt-input", prompt_input, "prompt input cloud")->required();
    inf->add_option("--prompt-target", prompt_target, "prompt target cloud")->required();
    inf->add_option("--query", query, "query input cloud")->required();
    inf->add_option("--out", out, "output .xyz path")->required();
    inf->add_option("--seed", seed, "random seed");

    auto* plot = app.add_subcommand("plot", "render charts and CSV from a report");
    plot->add_option("--report", report_path, "report.json path")->required();
    plot->add_option("--out", out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) return cmd_build_data(source, out, config_path, seed);
        if (train->parsed()) return cmd_train(config_path, data, out, log_path, seed, resume);
        if (ev->parsed()) {
            return cmd_eval(ckpt, data, strategy, report_path, csv_path, copy_baseline, seed);
        }
        if (inf->parsed()) {
            return cmd_infer(ckpt, prompt_input, prompt_target, query, out, seed);
        }
        if (plot->parsed()) return cmd_plot(report_path, out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
