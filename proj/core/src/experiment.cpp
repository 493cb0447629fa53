#include "diffaug/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "diffaug/errors.hpp"
#include "diffaug/util.hpp"
#include "diffaug/version.hpp"

namespace diffaug {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
    for (const auto& [key, val] : j.items()) {
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError(context + ": unknown key '" + key + "'");
        }
    }
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
    std::filesystem::path path(p);
    if (base.empty() || path.is_absolute()) return path;
    return base / path;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(
    const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    check_keys(j, {"lexicon", "generator", "task"}, "experiment config");
    ExperimentConfig c;
    if (!j.contains("lexicon") || !j.contains("generator") ||
        !j.contains("task")) {
        throw ConfigError("experiment config needs lexicon, generator, task");
    }
    c.lexicon = resolve(base_dir, j.at("lexicon").get<std::string>());

    const json& g = j.at("generator");
    check_keys(g, {"corpus_spec", "seed", "vae", "vae_train", "unet", "text",
                   "diffusion"},
               "generator");
    if (!g.contains("corpus_spec")) {
        throw ConfigError("generator needs corpus_spec");
    }
    c.gen_corpus_spec = resolve(base_dir, g.at("corpus_spec").get<std::string>());
    c.generator_seed = g.value("seed", c.generator_seed);
    if (g.contains("vae")) {
        const json& v = g.at("vae");
        check_keys(v, {"image_size", "base", "latent_channels"}, "vae");
        c.vae.image_size = v.value("image_size", c.vae.image_size);
        c.vae.base = v.value("base", c.vae.base);
        c.vae.latent_channels =
            v.value("latent_channels", c.vae.latent_channels);
    }
    if (g.contains("vae_train")) {
        const json& v = g.at("vae_train");
        check_keys(v, {"epochs", "batch", "lr", "weight_decay", "kl_weight",
                       "seed"},
                   "vae_train");
        c.vae_train.epochs = v.value("epochs", c.vae_train.epochs);
        c.vae_train.batch = v.value("batch", c.vae_train.batch);
        c.vae_train.lr = v.value("lr", c.vae_train.lr);
        c.vae_train.weight_decay =
            v.value("weight_decay", c.vae_train.weight_decay);
        c.vae_train.kl_weight = v.value("kl_weight", c.vae_train.kl_weight);
        c.vae_train.seed = v.value("seed", c.vae_train.seed);
    }
    if (g.contains("unet")) {
        const json& v = g.at("unet");
        check_keys(v, {"latent_size", "in_channels", "base", "d_text",
                       "time_dim", "heads", "groups"},
                   "unet");
        c.unet.latent_size = v.value("latent_size", c.unet.latent_size);
        c.unet.in_channels = v.value("in_channels", c.unet.in_channels);
        c.unet.base = v.value("base", c.unet.base);
        c.unet.d_text = v.value("d_text", c.unet.d_text);
        c.unet.time_dim = v.value("time_dim", c.unet.time_dim);
        c.unet.heads = v.value("heads", c.unet.heads);
        c.unet.groups = v.value("groups", c.unet.groups);
    }
    if (g.contains("text")) {
        const json& v = g.at("text");
        check_keys(v, {"d_model", "max_tokens", "heads", "mlp_ratio"}, "text");
        c.text.d_model = v.value("d_model", c.text.d_model);
        c.text.max_tokens = v.value("max_tokens", c.text.max_tokens);
        c.text.heads = v.value("heads", c.text.heads);
        c.text.mlp_ratio = v.value("mlp_ratio", c.text.mlp_ratio);
    }
    if (g.contains("diffusion")) {
        const json& v = g.at("diffusion");
        check_keys(v, {"T", "schedule", "guidance", "uncond_drop_prob",
                       "sample_steps", "epochs", "batch", "lr",
                       "weight_decay"},
                   "diffusion");
        c.diffusion.T = v.value("T", c.diffusion.T);
        c.diffusion.schedule = v.value("schedule", c.diffusion.schedule);
        c.diffusion.guidance = v.value("guidance", c.diffusion.guidance);
        c.diffusion.uncond_drop_prob =
            v.value("uncond_drop_prob", c.diffusion.uncond_drop_prob);
        c.diffusion.sample_steps =
            v.value("sample_steps", c.diffusion.sample_steps);
        c.diffusion.epochs = v.value("epochs", c.diffusion.epochs);
        c.diffusion.batch = v.value("batch", c.diffusion.batch);
        c.diffusion.lr = v.value("lr", c.diffusion.lr);
        c.diffusion.weight_decay =
            v.value("weight_decay", c.diffusion.weight_decay);
    }

    const json& t = j.at("task");
    check_keys(t, {"corpus_spec", "split", "split_seed", "classifier",
                   "strategies", "seeds", "guidance", "bootstrap"},
               "task");
    if (!t.contains("corpus_spec") || !t.contains("strategies") ||
        !t.contains("seeds")) {
        throw ConfigError("task needs corpus_spec, strategies, seeds");
    }
    c.task_corpus_spec =
        resolve(base_dir, t.at("corpus_spec").get<std::string>());
    if (t.contains("split")) {
        auto s = t.at("split").get<std::vector<double>>();
        if (s.size() != 3) throw ConfigError("task split needs three ratios");
        c.task_split = {s[0], s[1], s[2]};
    }
    c.task_split_seed = t.value("split_seed", c.task_split_seed);
    if (t.contains("classifier")) {
        const json& v = t.at("classifier");
        check_keys(v, {"image_size", "patch", "embed", "blocks", "heads",
                       "mlp_ratio", "epochs", "batch", "lr", "weight_decay",
                       "patience"},
                   "classifier");
        c.classifier.image_size =
            v.value("image_size", c.classifier.image_size);
        c.classifier.patch = v.value("patch", c.classifier.patch);
        c.classifier.embed = v.value("embed", c.classifier.embed);
        c.classifier.blocks = v.value("blocks", c.classifier.blocks);
        c.classifier.heads = v.value("heads", c.classifier.heads);
        c.classifier.mlp_ratio = v.value("mlp_ratio", c.classifier.mlp_ratio);
        c.classifier.epochs = v.value("epochs", c.classifier.epochs);
        c.classifier.batch = v.value("batch", c.classifier.batch);
        c.classifier.lr = v.value("lr", c.classifier.lr);
        c.classifier.weight_decay =
            v.value("weight_decay", c.classifier.weight_decay);
        c.classifier.patience = v.value("patience", c.classifier.patience);
    }
    for (const auto& s : t.at("strategies").get<std::vector<std::string>>()) {
        c.strategies.push_back(parse_strategy(s));
    }
    c.seeds = t.at("seeds").get<std::vector<uint64_t>>();
    c.guidance = t.value("guidance", c.guidance);
    if (t.contains("bootstrap")) {
        const json& v = t.at("bootstrap");
        check_keys(v, {"resamples", "level", "seed"}, "bootstrap");
        c.bootstrap.resamples = v.value("resamples", c.bootstrap.resamples);
        c.bootstrap.level = v.value("level", c.bootstrap.level);
        c.bootstrap.seed = v.value("seed", c.bootstrap.seed);
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return from_json_text(read_text_file(path), path.parent_path());
}

std::string ExperimentConfig::canonical_json() const {
    json j{
        {"lexicon", lexicon.string()},
        {"generator",
         json{{"corpus_spec", gen_corpus_spec.string()},
              {"seed", generator_seed},
              {"vae",
               json{{"image_size", vae.image_size},
                    {"base", vae.base},
                    {"latent_channels", vae.latent_channels}}},
              {"vae_train",
               json{{"epochs", vae_train.epochs},
                    {"batch", vae_train.batch},
                    {"lr", vae_train.lr},
                    {"weight_decay", vae_train.weight_decay},
                    {"kl_weight", vae_train.kl_weight},
                    {"seed", vae_train.seed}}},
              {"unet",
               json{{"latent_size", unet.latent_size},
                    {"in_channels", unet.in_channels},
                    {"base", unet.base},
                    {"d_text", unet.d_text},
                    {"time_dim", unet.time_dim},
                    {"heads", unet.heads},
                    {"groups", unet.groups}}},
              {"text",
               json{{"d_model", text.d_model},
                    {"max_tokens", text.max_tokens},
                    {"heads", text.heads},
                    {"mlp_ratio", text.mlp_ratio}}},
              {"diffusion",
               json{{"T", diffusion.T},
                    {"schedule", diffusion.schedule},
                    {"guidance", diffusion.guidance},
                    {"uncond_drop_prob", diffusion.uncond_drop_prob},
                    {"sample_steps", diffusion.sample_steps},
                    {"epochs", diffusion.epochs},
                    {"batch", diffusion.batch},
                    {"lr", diffusion.lr},
                    {"weight_decay", diffusion.weight_decay}}}}},
        {"task",
         json{{"corpus_spec", task_corpus_spec.string()},
              {"split", {task_split[0], task_split[1], task_split[2]}},
              {"split_seed", task_split_seed},
              {"classifier",
               json{{"image_size", classifier.image_size},
                    {"patch", classifier.patch},
                    {"embed", classifier.embed},
                    {"blocks", classifier.blocks},
                    {"heads", classifier.heads},
                    {"mlp_ratio", classifier.mlp_ratio},
                    {"epochs", classifier.epochs},
                    {"batch", classifier.batch},
                    {"lr", classifier.lr},
                    {"weight_decay", classifier.weight_decay},
                    {"patience", classifier.patience}}},
              {"strategies", json::array()},
              {"seeds", seeds},
              {"guidance", guidance},
              {"bootstrap",
               json{{"resamples", bootstrap.resamples},
                    {"level", bootstrap.level},
                    {"seed", bootstrap.seed}}}}},
        {"version", kVersion}};
    for (const auto& s : strategies) {
        j["task"]["strategies"].push_back(strategy_name(s));
    }
    return j.dump();
}

std::string ExperimentConfig::hash() const {
    return hex64(fnv1a64(canonical_json()));
}

RunLedger RunLedger::open(const std::filesystem::path& file) {
    RunLedger l;
    l.file_ = file;
    if (!std::filesystem::exists(file)) return l;
    json j;
    try {
        j = json::parse(read_text_file(file));
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": corrupt ledger: " + e.what());
    }
    for (const auto& [stage, entry] : j.items()) {
        Entry e;
        e.hash = entry.at("hash").get<std::string>();
        e.wall_ms = entry.value("wall_ms", 0.0);
        e.artifact = entry.value("artifact", std::string());
        e.status = entry.value("status", std::string("done"));
        l.stages_[stage] = std::move(e);
    }
    return l;
}

bool RunLedger::is_done(const std::string& stage,
                        const std::string& hash) const {
    auto it = stages_.find(stage);
    return it != stages_.end() && it->second.hash == hash &&
           it->second.status == "done";
}

void RunLedger::mark_done(const std::string& stage, const std::string& hash,
                          double wall_ms, const std::string& artifact) {
    stages_[stage] = Entry{hash, wall_ms, artifact, "done"};
}

void RunLedger::mark_failed(const std::string& stage, const std::string& hash,
                            const std::string& message) {
    stages_[stage] = Entry{hash, 0.0, "", "failed: " + message};
}

void RunLedger::save() const {
    json j = json::object();
    for (const auto& [stage, e] : stages_) {
        j[stage] = json{{"hash", e.hash},
                        {"wall_ms", e.wall_ms},
                        {"artifact", e.artifact},
                        {"status", e.status}};
    }
    write_text_file(file_, j.dump(2) + "\n");
}

namespace {

std::string image_store_key(const Manifest& m, const ImageRecord& rec) {
    std::filesystem::path p(rec.path);
    std::filesystem::path abs = p.is_absolute() ? p : m.root / p;
    return abs.lexically_normal().string();
}

std::string hash_test_split(const Manifest& m) {
    std::string acc;
    for (const auto& rec : m.records) {
        if (rec.split != Split::test) continue;
        acc += rec.path + "|" + rec.class_label + "|" + rec.prompt.render() +
               "\n";
    }
    return hex64(fnv1a64(acc));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir,
                                std::ostream& log, const std::string& until) {
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;

    if (cfg.seeds.empty()) throw ConfigError("experiment: no seeds");
    if (cfg.strategies.empty()) throw ConfigError("experiment: no strategies");
    if (std::find(cfg.strategies.begin(), cfg.strategies.end(),
                  Strategy::none) == cfg.strategies.end()) {
        throw ConfigError("experiment: strategies must include the 'none' "
                          "baseline");
    }
    {
        std::set<uint64_t> dedup(cfg.seeds.begin(), cfg.seeds.end());
        if (dedup.size() != cfg.seeds.size()) {
            throw ConfigError("experiment: duplicate seeds");
        }
    }

    fs::create_directories(out_dir);
    std::string lex_text = read_text_file(cfg.lexicon);
    std::string gen_spec_text = read_text_file(cfg.gen_corpus_spec);
    std::string task_spec_text = read_text_file(cfg.task_corpus_spec);
    std::string run_hash =
        hex64(fnv1a64(cfg.canonical_json() + "\x1f" + lex_text + "\x1f" +
                      gen_spec_text + "\x1f" + task_spec_text));

    TermLexicon lexicon =
        TermLexicon::compile_text(lex_text, cfg.lexicon.string());
    SyntheticSpec gen_spec =
        SyntheticSpec::parse_text(gen_spec_text, cfg.gen_corpus_spec.string());
    SyntheticSpec task_spec = SyntheticSpec::parse_text(
        task_spec_text, cfg.task_corpus_spec.string());

    if (gen_spec.size != cfg.vae.image_size) {
        throw ConfigError("experiment: generator corpus size differs from "
                          "the vae image size");
    }
    if (task_spec.size != cfg.classifier.image_size) {
        throw ConfigError("experiment: task corpus size differs from the "
                          "classifier image size");
    }

    RunLedger ledger = RunLedger::open(out_dir / "ledger.json");
    auto file_hash = [](const fs::path& p) {
        std::vector<uint8_t> bytes = read_binary_file(p);
        return hex64(fnv1a64(bytes.data(), bytes.size()));
    };
    // `artifact` names the stage's main output; its content hash goes into
    // the ledger for provenance. A failure is recorded before rethrowing.
    bool stopped = false;
    auto stage = [&](const std::string& name,
                     const std::vector<fs::path>& outputs,
                     const fs::path& artifact, auto&& fn) {
        if (stopped) return;
        bool have = true;
        for (const auto& p : outputs) have = have && fs::exists(p);
        if (have && ledger.is_done(name, run_hash)) {
            log << "[" << name << "] up to date\n";
            if (name == until) stopped = true;
            return;
        }
        log << "[" << name << "] running...\n";
        auto t0 = clock::now();
        try {
            fn();
        } catch (const std::exception& e) {
            ledger.mark_failed(name, run_hash, e.what());
            ledger.save();
            throw Error("stage " + name + ": " + e.what());
        }
        double ms = std::chrono::duration<double, std::milli>(clock::now() -
                                                              t0)
                        .count();
        ledger.mark_done(name, run_hash, ms,
                         artifact.empty() ? "" : file_hash(artifact));
        ledger.save();
        log << "[" << name << "] done in " << static_cast<long>(ms) << " ms\n";
        if (name == until) stopped = true;
    };

    // Generator pretraining corpus.
    fs::path gen_dir = out_dir / "gen_corpus";
    fs::path gen_csv = gen_dir / "manifest.csv";
    stage("gen_corpus", {gen_csv}, gen_csv, [&] {
        Manifest m = generate_synthetic_corpus(gen_spec, gen_dir);
        if (gen_spec.do_split) {
            m = stratified_split(m, gen_spec.split_ratios, gen_spec.seed);
        }
        write_manifest(gen_csv, m);
    });

    auto load_clean = [&](const fs::path& csv) {
        ManifestLoad ml = load_manifest(csv, lexicon);
        if (!ml.row_errors.empty()) {
            throw ContractError(csv.string() + ": generated manifest has " +
                                std::to_string(ml.row_errors.size()) +
                                " bad rows; first at line " +
                                std::to_string(ml.row_errors[0].line) + ": " +
                                ml.row_errors[0].message);
        }
        return ml.manifest;
    };

    // VAE pretraining.
    fs::path vae_ckpt = out_dir / "vae.ckpt";
    stage("vae", {vae_ckpt}, vae_ckpt, [&] {
        Manifest m = load_clean(gen_csv);
        Rng vrng = Rng(cfg.generator_seed).derive(1);
        Vae vae(cfg.vae, vrng);
        ImageStore store;
        VaeTrainStats stats = train_vae(vae, m, store, cfg.vae_train);
        CheckpointWriter w;
        vae.save(w, "vae.");
        w.set_meta("latent_scale", stats.latent_scale);
        w.set_meta("recon_mse", stats.recon_mse);
        w.write(vae_ckpt, cfg.vae_train.seed, run_hash);
        log << "  vae recon_mse " << stats.recon_mse << ", latent_scale "
            << stats.latent_scale << "\n";
    });

    // Diffusion stack training.
    fs::path stack_ckpt = out_dir / "stack.ckpt";
    stage("diffusion", {stack_ckpt}, stack_ckpt, [&] {
        Checkpoint vc = Checkpoint::load(vae_ckpt);
        Vae vae = Vae::load(vc, "vae.");
        double latent_scale = vc.meta().at("latent_scale").get<double>();
        GenerativeStack stack(std::move(vae), cfg.unet, cfg.text,
                              cfg.diffusion, lexicon.canonical_terms(),
                              latent_scale, cfg.generator_seed);
        Manifest m = load_clean(gen_csv);
        ImageStore store;
        DiffusionTrainStats stats = train_diffusion(
            stack, m, store, out_dir / "diffusion", cfg.generator_seed,
            run_hash);
        fs::copy_file(stats.final_checkpoint, stack_ckpt,
                      fs::copy_options::overwrite_existing);
        if (!stats.epoch_loss.empty()) {
            log << "  diffusion loss " << stats.epoch_loss.front() << " -> "
                << stats.epoch_loss.back() << "\n";
        }
    });

    // Downstream task corpus with the experiment's stratified split.
    fs::path task_dir = out_dir / "task";
    fs::path task_csv = task_dir / "manifest.csv";
    stage("task_corpus", {task_csv}, task_csv, [&] {
        Manifest m = generate_synthetic_corpus(task_spec, task_dir);
        m = stratified_split(m, cfg.task_split, cfg.task_split_seed);
        write_manifest(task_csv, m);
    });
    if (stopped) return ExperimentResult{};

    Manifest task_manifest = load_clean(task_csv);
    std::string test_split_hash = hash_test_split(task_manifest);
    std::vector<std::string> classes;
    {
        std::set<std::string> cls;
        for (const auto& rec : task_manifest.records) {
            cls.insert(rec.class_label);
        }
        classes.assign(cls.begin(), cls.end());
    }
    std::set<std::string> test_keys;
    for (const auto& rec : task_manifest.records) {
        if (rec.split == Split::test) {
            test_keys.insert(image_store_key(task_manifest, rec));
        }
    }
    std::map<std::string, StructuredPrompt> prompts;
    for (const auto& c : task_spec.classes) {
        StructuredPrompt p;
        p.modality = modality_for_style(c.style);
        p.findings = {finding_for_motif(c.motif)};
        prompts[c.name] = std::move(p);
    }

    // Baseline first so paired tests can read its predictions.
    std::vector<Strategy> strategies{Strategy::none};
    for (Strategy s : cfg.strategies) {
        if (s != Strategy::none) strategies.push_back(s);
    }

    // Generative stack loaded lazily, once, if any arm synthesizes.
    GenerativeStack stack;
    bool stack_loaded = false;
    auto ensure_stack = [&]() -> GenerativeStack& {
        if (!stack_loaded) {
            stack = GenerativeStack::load(stack_ckpt);
            stack_loaded = true;
        }
        return stack;
    };

    ExperimentResult result;
    for (uint64_t seed : cfg.seeds) {
        for (Strategy strat : strategies) {
            std::string arm = strategy_name(strat);
            std::string arm_id = arm + "_s" + std::to_string(seed);
            fs::path arm_dir = out_dir / "arms" / arm_id;
            fs::path report_path = arm_dir / "report.json";
            fs::path preds_path = arm_dir / "predictions.csv";
            stage("arm_" + arm_id, {report_path, preds_path}, report_path, [&] {
                fs::create_directories(arm_dir);
                AugmentationPlan plan = plan_balance(
                    class_histogram(task_manifest), strat,
                    mix64(seed ^ fnv1a64("augment")));
                write_plan_json(arm_dir / "plan.json", plan,
                                strat == Strategy::synthesize
                                    ? file_hash(stack_ckpt)
                                    : "");
                StackSynthesisBackend backend_impl(
                    strat == Strategy::synthesize ? ensure_stack() : stack,
                    arm_dir / "synth", cfg.guidance);
                Manifest augmented =
                    apply_plan(task_manifest, plan, prompts,
                               strat == Strategy::synthesize ? &backend_impl
                                                             : nullptr);
                ClassHistogram hist = class_histogram(augmented);
                for (const auto& [cls, target] : plan.targets) {
                    if (hist.counts.at(cls)[static_cast<size_t>(
                            Split::train)] != target) {
                        throw ContractError(
                            "augmented train count for class '" + cls +
                            "' missed its target");
                    }
                }
                write_manifest(arm_dir / "augmented.csv", augmented);

                Classifier clf(cfg.classifier, classes, seed);
                ImageStore store;
                TrainHistory hist2 =
                    train_classifier(clf, augmented, store, seed);
                for (const auto& key : store.accessed()) {
                    if (test_keys.count(key)) {
                        throw ContractError(
                            "isolation audit: training read test image " +
                            key);
                    }
                }
                clf.save(arm_dir / "classifier.ckpt", seed, run_hash);
                write_predictions(preds_path, clf, task_manifest, store,
                                  Split::test);

                PredictionTable preds = read_predictions(preds_path);
                MetricReport rep = evaluate_predictions(
                    preds, arm, seed, run_hash, test_split_hash,
                    cfg.bootstrap.resamples, cfg.bootstrap.level,
                    mix64(cfg.bootstrap.seed ^ seed));
                if (strat != Strategy::none) {
                    fs::path base_preds_path =
                        out_dir / "arms" /
                        ("none_s" + std::to_string(seed)) / "predictions.csv";
                    PredictionTable base_preds =
                        read_predictions(base_preds_path);
                    PairedMacroP pp = paired_macro_p(
                        preds, base_preds, cfg.bootstrap.resamples,
                        mix64(cfg.bootstrap.seed ^ seed ^ fnv1a64("paired")));
                    rep.has_paired = true;
                    rep.paired_auroc_p = pp.auroc_p;
                    rep.paired_aupr_p = pp.aupr_p;
                }
                rep.save(report_path);
                log << "  " << arm_id << " macro auroc " << rep.macro_auroc
                    << ", aupr " << rep.macro_aupr << ", acc " << rep.accuracy
                    << (hist2.early_stopped ? " (early stop)" : "") << "\n";
            });
            result.reports[arm].push_back(MetricReport::load(report_path));
            if (stopped) return result;
        }
    }

    // Aggregate summary and plots.
    fs::path summary_md = out_dir / "summary.md";
    fs::path summary_json = out_dir / "summary.json";
    stage("aggregate",
          {summary_md, summary_json, out_dir / "macro_auroc.svg",
           out_dir / "macro_aupr.svg", out_dir / "pr_curves.svg"},
          summary_json, [&] {
              write_summary_markdown(summary_md, result.reports, "none");
              write_summary_json(summary_json, result.reports, "none");
              std::vector<std::string> arm_names;
              std::vector<AggregateCell> auroc_cells, aupr_cells;
              for (Strategy strat : strategies) {
                  std::string arm = strategy_name(strat);
                  arm_names.push_back(arm);
                  std::vector<double> va, vp;
                  for (const auto& r : result.reports.at(arm)) {
                      va.push_back(r.macro_auroc);
                      vp.push_back(r.macro_aupr);
                  }
                  auroc_cells.push_back(aggregate_values(va));
                  aupr_cells.push_back(aggregate_values(vp));
              }
              write_macro_bar_svg(out_dir / "macro_auroc.svg", "macro AUROC",
                                  arm_names, auroc_cells);
              write_macro_bar_svg(out_dir / "macro_aupr.svg", "macro AUPR",
                                  arm_names, aupr_cells);
              std::map<std::string, PredictionTable> first_seed_preds;
              for (Strategy strat : strategies) {
                  std::string arm = strategy_name(strat);
                  first_seed_preds[arm] = read_predictions(
                      out_dir / "arms" /
                      (arm + "_s" + std::to_string(cfg.seeds[0])) /
                      "predictions.csv");
              }
              write_pr_curves_svg(out_dir / "pr_curves.svg",
                                  first_seed_preds);
          });
    result.summary_md = summary_md;
    result.summary_json = summary_json;
    return result;
}

}  // namespace diffaug
