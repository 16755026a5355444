// Command-line surface: training runs, evaluations, baseline sweeps and
// report/plot-data generation. Exit codes: 0 success, 1 user error, 2 internal.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "promptcal/dataset.hpp"
#include "promptcal/eval.hpp"
#include "promptcal/grpo.hpp"
#include "promptcal/reporting.hpp"
#include "promptcal/run_config.hpp"
#include "promptcal/text.hpp"

namespace fs = std::filesystem;
using namespace promptcal;

namespace {

struct UserError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void ensure_output_dir(const std::string& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force)
            throw UserError("output directory '" + dir +
                            "' already exists and is not empty (use --force to overwrite)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
}

std::string generation_note(const GenerationParams& p) {
    return "temperature=" + fmt_double(p.temperature) + " top_k=" + std::to_string(p.top_k) +
           " max_new_tokens=" + std::to_string(p.max_new_tokens);
}

void write_eval_outputs(const std::string& out_dir, const std::vector<EvalRecord>& records,
                        CalibrationReport report) {
    save_records(records, (fs::path(out_dir) / "records.jsonl").string());
    save_report(report, (fs::path(out_dir) / "report.json").string());
    write_text((fs::path(out_dir) / "reliability.csv").string(), reliability_csv(report.bins));
}

int cmd_train(const std::string& config_path, bool force) {
    RunConfig cfg = load_run_config(config_path);
    ensure_output_dir(cfg.output_dir, force);

    Dataset train_data = load_split(cfg, Split::Train);
    Dataset val_data;
    const bool want_eval = cfg.grpo.eval_every > 0 && !cfg.data.val.path.empty();
    if (want_eval) val_data = load_split(cfg, Split::Val);

    auto backend = make_backend(cfg, {&train_data, want_eval ? &val_data : nullptr});
    auto policy = make_native_policy(cfg);

    TrainSetup setup;
    setup.policy = policy.get();
    setup.downstream = backend.get();
    setup.train_data = &train_data;
    setup.val_data = want_eval ? &val_data : nullptr;
    setup.tmpl = cfg.instruction;
    setup.params = cfg.generation;
    setup.reward = cfg.reward;
    setup.grpo = cfg.grpo;
    if (!want_eval) setup.grpo.eval_every = 0;
    setup.retry = cfg.retry;
    setup.metric_bins = cfg.metrics.n_bins;
    setup.conf_threshold = cfg.metrics.conf_threshold;
    setup.run_dir = cfg.output_dir;
    setup.config_snapshot = cfg.source_text;

    const TrainingArtifacts artifacts = train(setup);
    std::cout << "trained " << artifacts.reward_curve.size() << " steps, checkpoint at "
              << artifacts.checkpoint_path << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& split_name, bool sample, std::size_t extra_incorrect,
             std::string out_dir, const std::string& label, bool force) {
    RunConfig cfg = load_run_config(config_path);
    const Split split = split_from_string(split_name);
    Dataset data = load_split(cfg, split);

    auto backend = make_backend(cfg, {&data});
    std::unique_ptr<CgpPolicy> policy;
    if (cfg.policy.kind == PolicySection::Kind::Native) {
        auto native = make_native_policy(cfg);
        if (checkpoint_path.empty())
            throw UserError("eval with a native policy requires --checkpoint");
        native->load_checkpoint_file(checkpoint_path);
        policy = std::move(native);
    } else {
        policy = make_cgp_policy(cfg);
    }

    if (out_dir.empty())
        out_dir = (fs::path(cfg.output_dir) / ("eval_" + to_string(split))).string();
    ensure_output_dir(out_dir, force);

    EvalSettings settings;
    settings.sample_cgp = sample;
    settings.seed = cfg.seed;
    settings.max_workers = cfg.grpo.max_workers;
    const auto records = run_policy_eval(policy.get(), data, *backend, cfg.instruction,
                                         cfg.generation, cfg.retry, settings);
    CalibrationReport report =
        slice_report(records, cfg.metrics.conf_threshold, cfg.metrics.n_bins, extra_incorrect,
                     label.empty() ? "learned" : label);
    report.meta["split"] = to_string(split);
    report.meta["cgp_selection"] = sample ? "sampled" : "greedy";
    report.meta["generation"] = generation_note(cfg.generation);
    write_eval_outputs(out_dir, records, report);
    std::cout << "evaluated " << records.size() << " queries -> " << out_dir << "\n";
    return 0;
}

int cmd_baseline(const std::string& config_path, const std::string& kind_name,
                 const std::string& split_name, std::string out_dir, const std::string& label,
                 bool force) {
    RunConfig cfg = load_run_config(config_path);
    const Split split = split_from_string(split_name);
    Dataset data = load_split(cfg, split);

    BaselineSpec spec = cfg.baseline;
    spec.kind = baseline_kind_from_string(kind_name);
    auto backend = make_backend(cfg, {&data});

    if (out_dir.empty())
        out_dir = (fs::path(cfg.output_dir) /
                   ("baseline_" + to_string(spec.kind) + "_" + to_string(split)))
                      .string();
    ensure_output_dir(out_dir, force);

    const auto records = run_baseline_split(*backend, data, cfg.instruction, cfg.generation, spec,
                                            cfg.seed, cfg.grpo.max_workers, cfg.retry);
    CalibrationReport report =
        slice_report(records, cfg.metrics.conf_threshold, cfg.metrics.n_bins, 0,
                     label.empty() ? to_string(spec.kind) : label);
    report.meta["split"] = to_string(split);
    report.meta["generation"] = generation_note(cfg.generation);
    if (spec.kind == BaselineKind::VerbalizedFixedPA) report.meta["fixed_prompt"] = spec.fixed_prompt;
    if (spec.kind == BaselineKind::Consistency || spec.kind == BaselineKind::AvgConf) {
        report.meta["n_samples"] = std::to_string(spec.n_samples);
        report.meta["includes_original"] = "true";
        if (spec.cot_preamble) report.meta["cot_text"] = spec.cot_text;
    }
    write_eval_outputs(out_dir, records, report);
    std::cout << "baseline " << to_string(spec.kind) << " over " << records.size()
              << " queries -> " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir, bool svg) {
    std::vector<CalibrationReport> reports;
    for (const auto& arg : inputs) reports.push_back(load_report(resolve_report_path(arg)));

    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "comparison.csv").string(), comparison_csv(reports));
    write_text((fs::path(out_dir) / "curves.csv").string(), merged_curves_csv(reports));
    for (const auto& r : reports)
        write_text((fs::path(out_dir) / ("reliability_" + r.method + ".csv")).string(),
                   reliability_csv(r.bins));
    if (svg) write_text((fs::path(out_dir) / "curves.svg").string(), curves_svg(reports));
    std::cout << "merged " << reports.size() << " reports -> " << out_dir << "\n";
    return 0;
}

int cmd_config_init(const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << default_config_yaml();
        return 0;
    }
    if (fs::exists(path)) throw UserError("refusing to overwrite existing '" + path + "'");
    write_text(path, default_config_yaml());
    std::cout << "wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned calibration-guidance-prompt training and evaluation harness"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, split_name = "val", out_dir, label, kind_name;
    std::vector<std::string> report_inputs;
    std::string init_path;
    bool force = false, sample = false, svg = false;
    std::size_t extra_incorrect = 0;

    auto* train_cmd = app.add_subcommand("train", "Run GRPO training from a config file");
    train_cmd->add_option("--config", config_path, "Run config (YAML)")->required();
    train_cmd->add_flag("--force", force, "Overwrite an existing output directory");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained policy on a split");
    eval_cmd->add_option("--config", config_path, "Run config (YAML)")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "Policy checkpoint (native policies)");
    eval_cmd->add_option("--split", split_name, "val|test (default val)");
    eval_cmd->add_flag("--sample", sample, "Sample CGPs instead of greedy selection");
    eval_cmd->add_option("--extra-incorrect", extra_incorrect,
                         "Denominator-only samples added to the accuracy accounting");
    eval_cmd->add_option("--out", out_dir, "Output directory");
    eval_cmd->add_option("--label", label, "Method label in the report");
    eval_cmd->add_flag("--force", force, "Overwrite an existing output directory");

    auto* baseline_cmd = app.add_subcommand("baseline", "Run a comparison baseline over a split");
    baseline_cmd->add_option("--config", config_path, "Run config (YAML)")->required();
    baseline_cmd
        ->add_option("--kind", kind_name, "verbalized|verbalized-fixed|consistency|avg-conf")
        ->required();
    baseline_cmd->add_option("--split", split_name, "val|test (default val)");
    baseline_cmd->add_option("--out", out_dir, "Output directory");
    baseline_cmd->add_option("--label", label, "Method label in the report");
    baseline_cmd->add_flag("--force", force, "Overwrite an existing output directory");

    auto* report_cmd = app.add_subcommand("report", "Merge reports into comparison tables");
    report_cmd->add_option("inputs", report_inputs, "Report files or run directories")
        ->required()
        ->expected(-1);
    report_cmd->add_option("--out", out_dir, "Output directory")->required();
    report_cmd->add_flag("--svg", svg, "Also write an SVG reliability plot");

    auto* config_cmd = app.add_subcommand("config", "Config file helpers");
    auto* init_cmd = config_cmd->add_subcommand("init", "Emit the fully-commented default config");
    init_cmd->add_option("path", init_path, "Destination file (stdout when omitted)");
    config_cmd->require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*train_cmd) return cmd_train(config_path, force);
        if (*eval_cmd)
            return cmd_eval(config_path, checkpoint_path, split_name, sample, extra_incorrect,
                            out_dir, label, force);
        if (*baseline_cmd)
            return cmd_baseline(config_path, kind_name, split_name, out_dir, label, force);
        if (*report_cmd) return cmd_report(report_inputs, out_dir, svg);
        if (*init_cmd) return cmd_config_init(init_path);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DuplicateIdError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const SizeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ChecksumError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
