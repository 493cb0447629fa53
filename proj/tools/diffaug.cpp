// Command-line front end for the augmentation pipeline. Subcommands map
// onto pipeline stages; `--config` takes the experiment JSON except for
// gen-corpus, which takes a corpus spec file. Exits nonzero with the
// failing stage named on stderr.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffaug/augmentor.hpp"
#include "diffaug/corpus.hpp"
#include "diffaug/errors.hpp"
#include "diffaug/diffusion.hpp"
#include "diffaug/experiment.hpp"
#include "diffaug/lexicon.hpp"
#include "diffaug/report.hpp"
#include "diffaug/util.hpp"
#include "diffaug/version.hpp"

namespace {

using namespace diffaug;
namespace fs = std::filesystem;

struct Args {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
};

int run_gen_corpus(const Args& a) {
    SyntheticSpec spec = SyntheticSpec::parse_file(a.config);
    if (a.seed_set) spec.seed = a.seed;
    Manifest m = generate_synthetic_corpus(spec, a.out);
    if (spec.do_split) m = stratified_split(m, spec.split_ratios, spec.seed);
    write_manifest(fs::path(a.out) / "manifest.csv", m);
    std::cout << "wrote " << m.records.size() << " images under " << a.out
              << "\n";
    return 0;
}

ExperimentConfig load_config(const Args& a) {
    ExperimentConfig cfg = ExperimentConfig::load(a.config);
    if (a.seed_set) cfg.seeds = {a.seed};
    return cfg;
}

int run_until(const Args& a, const std::string& until) {
    run_experiment(load_config(a), a.out, std::cout, until);
    return 0;
}

int run_experiment_cmd(const Args& a) {
    ExperimentResult res = run_experiment(load_config(a), a.out, std::cout);
    std::cout << "summary: " << res.summary_md.string() << "\n";
    return 0;
}

// Samples `count` images per class from the trained stack into
// out/generated, plus a manifest fragment with provenance=synthetic.
int run_generate(const Args& a, size_t count, const std::string& only_class) {
    ExperimentConfig cfg = load_config(a);
    fs::path stack_ckpt = fs::path(a.out) / "stack.ckpt";
    if (!fs::exists(stack_ckpt)) {
        throw diffaug::ConfigError("no stack checkpoint at " + stack_ckpt.string() +
                          "; run `diffaug train-diffusion` first");
    }
    GenerativeStack stack = GenerativeStack::load(stack_ckpt);
    SyntheticSpec task_spec = SyntheticSpec::parse_file(cfg.task_corpus_spec);
    fs::path gen_dir = fs::path(a.out) / "generated";
    StackSynthesisBackend backend(stack, gen_dir, cfg.guidance);
    uint64_t seed = a.seed_set ? a.seed : 0;

    Manifest frag;
    frag.image_size = task_spec.size;
    frag.channels = 1;
    frag.root = fs::absolute(gen_dir);
    bool found = only_class.empty();
    for (const auto& c : task_spec.classes) {
        if (!only_class.empty() && c.name != only_class) continue;
        found = true;
        StructuredPrompt prompt;
        prompt.modality = modality_for_style(c.style);
        prompt.findings = {finding_for_motif(c.motif)};
        uint64_t class_seed = mix64(seed ^ fnv1a64(c.name));
        for (auto& rec : backend.generate(c.name, prompt, count, class_seed)) {
            frag.records.push_back(std::move(rec));
        }
    }
    if (!found) {
        throw diffaug::ConfigError("class '" + only_class +
                          "' is not in the task corpus spec");
    }
    write_manifest(gen_dir / "manifest.csv", frag);
    std::cout << "wrote " << frag.records.size() << " images under "
              << gen_dir.string() << "\n";
    return 0;
}

int run_train_classifier(const Args& a) {
    ExperimentConfig cfg = load_config(a);
    uint64_t seed = a.seed_set ? a.seed : cfg.seeds.at(0);
    cfg.seeds = {seed};
    run_experiment(cfg, a.out, std::cout,
                   "arm_none_s" + std::to_string(seed));
    return 0;
}

// Rebuilds summary tables and plots from the per-arm reports of an
// existing run directory.
int run_report(const Args& a) {
    ExperimentConfig cfg = load_config(a);
    std::map<std::string, std::vector<MetricReport>> reports;
    std::vector<std::string> missing;
    std::vector<Strategy> strategies{Strategy::none};
    for (Strategy s : cfg.strategies) {
        if (s != Strategy::none) strategies.push_back(s);
    }
    for (Strategy strat : strategies) {
        std::string arm = strategy_name(strat);
        for (uint64_t seed : cfg.seeds) {
            fs::path p = fs::path(a.out) / "arms" /
                         (arm + "_s" + std::to_string(seed)) / "report.json";
            if (!fs::exists(p)) {
                missing.push_back(arm + "_s" + std::to_string(seed));
                continue;
            }
            reports[arm].push_back(MetricReport::load(p));
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            if (!list.empty()) list += ", ";
            list += m;
        }
        throw diffaug::ConfigError("missing reports for arms: " + list);
    }
    fs::path out(a.out);
    write_summary_markdown(out / "summary.md", reports, "none");
    write_summary_json(out / "summary.json", reports, "none");
    std::vector<std::string> arm_names;
    std::vector<AggregateCell> auroc_cells, aupr_cells;
    std::map<std::string, PredictionTable> first_preds;
    for (Strategy strat : strategies) {
        std::string arm = strategy_name(strat);
        arm_names.push_back(arm);
        std::vector<double> va, vp;
        for (const auto& r : reports.at(arm)) {
            va.push_back(r.macro_auroc);
            vp.push_back(r.macro_aupr);
        }
        auroc_cells.push_back(aggregate_values(va));
        aupr_cells.push_back(aggregate_values(vp));
        first_preds[arm] = read_predictions(
            out / "arms" / (arm + "_s" + std::to_string(cfg.seeds.at(0))) /
            "predictions.csv");
    }
    write_macro_bar_svg(out / "macro_auroc.svg", "macro AUROC", arm_names,
                        auroc_cells);
    write_macro_bar_svg(out / "macro_aupr.svg", "macro AUPR", arm_names,
                        aupr_cells);
    write_pr_curves_svg(out / "pr_curves.svg", first_preds);
    std::cout << read_text_file(out / "summary.md");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"text-conditioned diffusion augmentation pipeline"};
    app.set_version_flag("--version", diffaug::kVersion);
    app.require_subcommand(1);

    Args a;
    size_t gen_count = 8;
    std::string only_class;
    std::string stage_name = "startup";

    auto add_common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", a.config, "config file path")
            ->required();
        auto* seed_opt = sub->add_option("--seed", a.seed, "seed override");
        sub->callback([&a, seed_opt] { a.seed_set = seed_opt->count() > 0; });
        auto* out = sub->add_option("--out", a.out, "output directory");
        if (out_required) out->required();
    };

    auto* gen_corpus = app.add_subcommand(
        "gen-corpus", "render a synthetic corpus from a spec file");
    add_common(gen_corpus, true);
    auto* train_vae = app.add_subcommand(
        "train-vae", "run the pipeline through VAE pretraining");
    add_common(train_vae, true);
    auto* train_diffusion = app.add_subcommand(
        "train-diffusion", "run the pipeline through diffusion training");
    add_common(train_diffusion, true);
    auto* generate = app.add_subcommand(
        "generate", "sample images from the trained stack");
    add_common(generate, true);
    generate->add_option("--count", gen_count, "images per class");
    generate->add_option("--class", only_class, "restrict to one class");
    auto* train_classifier = app.add_subcommand(
        "train-classifier", "train and evaluate the baseline classifier");
    add_common(train_classifier, true);
    auto* experiment = app.add_subcommand(
        "experiment", "run the full multi-arm study");
    add_common(experiment, true);
    auto* report = app.add_subcommand(
        "report", "rebuild summary tables and plots from stored reports");
    add_common(report, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_corpus->parsed()) {
            stage_name = "gen-corpus";
            return run_gen_corpus(a);
        }
        if (train_vae->parsed()) {
            stage_name = "train-vae";
            return run_until(a, "vae");
        }
        if (train_diffusion->parsed()) {
            stage_name = "train-diffusion";
            return run_until(a, "diffusion");
        }
        if (generate->parsed()) {
            stage_name = "generate";
            return run_generate(a, gen_count, only_class);
        }
        if (train_classifier->parsed()) {
            stage_name = "train-classifier";
            return run_train_classifier(a);
        }
        if (experiment->parsed()) {
            stage_name = "experiment";
            return run_experiment_cmd(a);
        }
        if (report->parsed()) {
            stage_name = "report";
            return run_report(a);
        }
    } catch (const std::exception& e) {
        std::cerr << "diffaug " << stage_name << " failed: " << e.what()
                  << "\n";
        return 1;
    }
    return 2;
}
