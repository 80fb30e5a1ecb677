#include "mkgc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "mkgc/runio.hpp"
#include "mkgc/verify.hpp"

namespace fs = std::filesystem;

namespace mkgc::cli {

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct LoadedData {
    EntityVocabulary entities;
    RelationRegistry relations;
    TripleStore train{"train"};
    std::optional<TripleStore> dev, test;
    std::vector<SequenceExample> corpus;
};

LoadedData load_task_data(const std::string& task, const std::string& data_dir,
                          const ModelConfig& cfg) {
    LoadedData data;
    if (task == "link") {
        data.entities = load_entities((fs::path(data_dir) / "entities.tsv").string(),
                                      data_dir, cfg);
        data.train = load_triples((fs::path(data_dir) / "train.tsv").string(), data.entities,
                                  data.relations, "train");
        for (const char* split : {"dev", "test"}) {
            const fs::path p = fs::path(data_dir) / (std::string(split) + ".tsv");
            if (fs::exists(p)) {
                auto store = load_triples(p.string(), data.entities, data.relations, split);
                if (std::string(split) == "dev") {
                    data.dev = std::move(store);
                } else {
                    data.test = std::move(store);
                }
            }
        }
    } else {
        const auto st = task == "re" ? SequenceTask::re : SequenceTask::ner;
        data.corpus = load_sequence_corpus((fs::path(data_dir) / "train.tsv").string(), st,
                                           data_dir, cfg);
    }
    return data;
}

std::vector<std::string> corpus_labels(const std::vector<SequenceExample>& corpus,
                                       const std::string& task) {
    std::set<std::string> seen;
    if (task == "re") {
        for (const auto& ex : corpus) seen.insert(ex.relation);
    } else {
        for (const auto& ex : corpus) {
            for (const auto& t : ex.tags) seen.insert(t);
        }
        seen.erase("O");
    }
    std::vector<std::string> out;
    if (task == "ner") out.push_back("O");
    out.insert(out.end(), seen.begin(), seen.end());
    return out;
}

Model build_model(const ModelConfig& cfg, const LoadedData& data, const std::string& task) {
    Vocabulary vocab = build_vocabulary(data.entities, data.relations, data.corpus);
    std::vector<std::string> rel_label_names;
    std::vector<std::string> tag_names;
    if (task == "re") rel_label_names = corpus_labels(data.corpus, task);
    if (task == "ner") tag_names = corpus_labels(data.corpus, task);
    return Model(cfg, std::move(vocab), data.entities, data.relations,
                 std::move(rel_label_names), std::move(tag_names));
}

MetricsReport run_single_training(const ModelConfig& mcfg, const TrainConfig& tcfg,
                                  const LoadedData& data, std::uint64_t seed,
                                  const std::string& run_dir, const std::string& config_hash) {
    Model model = build_model(mcfg, data, tcfg.task);
    model.weights.init(seed);
    TrainConfig cfg = tcfg;
    cfg.seed = seed;
    MetricsReport report;
    if (tcfg.task == "link") {
        TripleStore train = data.train;
        if (tcfg.k_shot > 0) {
            TripleStore sub("train");
            for (const auto& t : sample_k_shot_triples(data.train.triples(), tcfg.k_shot, seed)) {
                sub.add(t);
            }
            train = std::move(sub);
        }
        report = train_link_prediction(model, train, cfg);
    } else {
        const auto st = tcfg.task == "re" ? SequenceTask::re : SequenceTask::ner;
        std::vector<SequenceExample> corpus = data.corpus;
        if (tcfg.k_shot > 0) corpus = sample_k_shot_sequences(corpus, tcfg.k_shot, seed, st);
        report = train_classifier_head(model, corpus, cfg, st);
    }
    report.config_hash = config_hash;
    fs::create_directories(run_dir);
    save_checkpoint(model.weights, (fs::path(run_dir) / "checkpoint.mkgc").string());
    write_report(run_dir, report);
    return report;
}

int cmd_generate(const std::string& task, const std::string& out_dir, std::uint64_t seed,
                 KvConfig kv) {
    const ModelConfig cfg = model_config_from_kv(kv);
    const SyntheticSpec spec = synthetic_spec_from_kv(kv);
    materialize_model_config(kv, cfg);
    kv.set("seed", std::to_string(seed));
    write_manifest(out_dir, "generate", kv);
    if (task == "link") {
        generate_synthetic_link(out_dir, seed, spec, cfg);
    } else if (task == "re") {
        generate_synthetic_re(out_dir, seed, spec, cfg);
    } else {
        generate_synthetic_ner(out_dir, seed, spec, cfg);
    }
    std::cout << "generated " << task << " dataset under " << out_dir << "\n";
    return 0;
}

int cmd_train(KvConfig kv, const std::string& data_dir, const std::string& out_dir,
              const std::vector<std::string>& lm_sweep, const std::vector<std::string>& ablate_sweep) {
    const bool sweeping = lm_sweep.size() > 1 || ablate_sweep.size() > 1;
    const TrainConfig tcfg0 = train_config_from_kv(kv);
    {
        // Manifest reflects every effective value before any work starts.
        KvConfig resolved = kv;
        materialize_model_config(resolved, model_config_from_kv(kv));
        materialize_train_config(resolved, tcfg0);
        resolved.set("data_dir", data_dir);
        if (lm_sweep.size() > 1) {
            std::string joined;
            for (const auto& v : lm_sweep) joined += (joined.empty() ? "" : ",") + v;
            resolved.set("lm_sweep", joined);
        }
        if (ablate_sweep.size() > 1) {
            std::string joined;
            for (const auto& v : ablate_sweep) joined += (joined.empty() ? "" : ",") + v;
            resolved.set("ablate_sweep", joined);
        }
        write_manifest(out_dir, "train", resolved);
    }

    const std::string sweep_path = (fs::path(out_dir) / "sweep.tsv").string();
    for (const std::string& lm : lm_sweep) {
        for (const std::string& ab : ablate_sweep) {
            KvConfig run_kv = kv;
            run_kv.set("l_m", lm);
            run_kv.set("ablate", ab);
            const ModelConfig mcfg = model_config_from_kv(run_kv);
            const TrainConfig tcfg = train_config_from_kv(run_kv);
            const LoadedData data = load_task_data(tcfg.task, data_dir, mcfg);

            std::string run_dir = out_dir;
            if (sweeping) {
                run_dir = (fs::path(out_dir) / ("lm" + lm + "_" + ab)).string();
            }
            const std::string config_hash = effective_config_hash(run_kv);

            MetricsReport report;
            if (tcfg.n_seeds > 1) {
                // Low-resource protocol: independent runs, averaged report.
                std::vector<MetricsReport> reports;
                for (std::size_t s = 0; s < tcfg.n_seeds; ++s) {
                    const std::uint64_t seed = tcfg.seed + s;
                    const std::string seed_dir =
                        (fs::path(run_dir) / ("seed_" + std::to_string(seed))).string();
                    reports.push_back(
                        run_single_training(mcfg, tcfg, data, seed, seed_dir, config_hash));
                }
                report = average_reports(reports);
                report.config_hash = config_hash;
                fs::create_directories(run_dir);
                write_report(run_dir, report);
            } else {
                report = run_single_training(mcfg, tcfg, data, tcfg.seed, run_dir, config_hash);
            }
            append_tsv_row(sweep_path, "l_m\tablate\t" + report.tsv_header(),
                           lm + "\t" + ab + "\t" + report.tsv_row());
            std::cout << report.to_kv();
        }
    }
    return 0;
}

int cmd_eval(KvConfig kv, const std::string& data_dir, const std::string& checkpoint,
             const std::string& out_dir, const std::string& split) {
    const ModelConfig mcfg = model_config_from_kv(kv);
    const TrainConfig tcfg = train_config_from_kv(kv);
    {
        KvConfig resolved = kv;
        materialize_model_config(resolved, mcfg);
        materialize_train_config(resolved, tcfg);
        resolved.set("data_dir", data_dir);
        resolved.set("checkpoint", checkpoint);
        resolved.set("split", split);
        write_manifest(out_dir, "eval", resolved);
    }
    const LoadedData data = load_task_data(tcfg.task, data_dir, mcfg);
    Model model = build_model(mcfg, data, tcfg.task);
    load_checkpoint(model.weights, checkpoint);

    MetricsReport report;
    if (tcfg.task == "link") {
        FilterIndex filter;
        filter.add_store(data.train);
        if (data.dev) filter.add_store(*data.dev);
        if (data.test) filter.add_store(*data.test);
        const TripleStore* eval_split = &data.train;
        if (split == "dev" && data.dev) eval_split = &*data.dev;
        if (split == "test" && data.test) eval_split = &*data.test;
        report = evaluate_ranking(model, *eval_split, filter);
    } else if (tcfg.task == "re") {
        report = evaluate_re(model, data.corpus);
    } else {
        report = evaluate_ner(model, data.corpus);
    }
    report.seed = tcfg.seed;
    report.config_hash = effective_config_hash(kv);
    write_report(out_dir, report);
    std::cout << report.to_kv();
    return 0;
}

int cmd_inspect(KvConfig kv, const std::string& data_dir, const std::string& checkpoint,
                int entity_index, const std::string& out_file) {
    const ModelConfig mcfg = model_config_from_kv(kv);
    const LoadedData data = load_task_data("link", data_dir, mcfg);
    Model model = build_model(mcfg, data, "link");
    if (!checkpoint.empty()) {
        load_checkpoint(model.weights, checkpoint);
    } else {
        model.weights.init(kv.get_u64("seed", 42));
    }
    if (entity_index < 0 || entity_index >= model.entities.size()) {
        throw usage_error("entity index out of range");
    }
    const auto tpl = build_entity_modeling_input(model.entities, entity_index, model.vocab);
    FusionTrace trace;
    ad::Tape tape;
    forward_streams(tape, model.weights, tpl.token_ids,
                    model.entities.record(entity_index).images, &trace);
    const std::string text = trace.to_text();
    if (out_file.empty() || out_file == "-") {
        std::cout << text;
    } else {
        std::ofstream os(out_file, std::ios::binary);
        if (!os) throw io_error("cannot write trace to '" + out_file + "'");
        os << text;
    }
    return 0;
}

int cmd_verify(const std::string& only, bool mutate_w3, bool list_only) {
    if (list_only) {
        for (const auto& name : verify::suite_names()) std::cout << name << "\n";
        return 0;
    }
    verify::Options opt;
    opt.only = only;
    opt.mutate_w3 = mutate_w3;
    const auto results = verify::run_suites(opt);
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
        if (!r.detail.empty()) std::cout << ": " << r.detail;
        std::cout << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 3;
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"desk-scale multimodal knowledge-graph completion"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    std::string gen_task;
    std::string gen_out;
    std::uint64_t gen_seed = 7;
    std::string gen_config;
    SyntheticSpec gen_spec;
    gen->add_option("--task", gen_task, "link | re | ner")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--config", gen_config, "config file for image geometry");
    gen->add_option("--entities", gen_spec.entities);
    gen->add_option("--relations", gen_spec.relations);
    gen->add_option("--triples", gen_spec.triples);
    gen->add_option("--classes", gen_spec.classes);
    gen->add_option("--types", gen_spec.entity_types);
    gen->add_option("--examples", gen_spec.examples);

    // train
    auto* tr = app.add_subcommand("train", "train a task head");
    std::string tr_task, tr_config, tr_data, tr_out;
    std::string tr_lm_layers, tr_ablate;
    std::uint64_t tr_seed = 0;
    std::size_t tr_epochs = 0, tr_kshot = 0, tr_seeds = 0, tr_batch = 0, tr_eval_every = 0;
    double tr_lr = 0.0, tr_early = 0.0;
    tr->add_option("--task", tr_task, "link | re | ner");
    tr->add_option("--config", tr_config, "flat key = value config file");
    tr->add_option("--data", tr_data, "dataset directory (or data_dir from the config)");
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--lm-layers", tr_lm_layers, "fused depth, or comma list to sweep");
    tr->add_option("--ablate", tr_ablate, "none|no_pgi|no_caf|independent, comma list to sweep");
    auto* tr_seed_opt = tr->add_option("--seed", tr_seed);
    auto* tr_epochs_opt = tr->add_option("--epochs", tr_epochs);
    auto* tr_kshot_opt = tr->add_option("--k-shot", tr_kshot, "examples per class");
    auto* tr_seeds_opt = tr->add_option("--seeds", tr_seeds, "low-resource repetitions");
    auto* tr_batch_opt = tr->add_option("--batch-size", tr_batch);
    auto* tr_lr_opt = tr->add_option("--lr", tr_lr);
    auto* tr_eval_opt = tr->add_option("--eval-every", tr_eval_every);
    auto* tr_early_opt = tr->add_option("--early-stop", tr_early, "target train metric");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_task, ev_config, ev_data, ev_out, ev_ckpt, ev_split = "train";
    ev->add_option("--task", ev_task, "link | re | ner");
    ev->add_option("--config", ev_config, "config file");
    ev->add_option("--data", ev_data, "dataset directory (or data_dir from the config)");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file (or checkpoint from the config)");
    ev->add_option("--out", ev_out, "output directory");
    ev->add_option("--split", ev_split, "train | dev | test");

    // inspect
    auto* in = app.add_subcommand("inspect", "dump fusion internals");
    bool in_trace = false;
    std::string in_config, in_data, in_ckpt, in_out;
    int in_entity = 0;
    in->add_flag("--trace", in_trace, "dump the fusion trace");
    in->add_option("--config", in_config, "config file");
    in->add_option("--data", in_data, "dataset directory")->required();
    in->add_option("--checkpoint", in_ckpt, "checkpoint file");
    in->add_option("--entity", in_entity, "entity index to trace");
    in->add_option("--out", in_out, "trace output file (default stdout)");

    // verify
    auto* ve = app.add_subcommand("verify", "run the property suites");
    std::string ve_only;
    bool ve_mutate = false, ve_list = false;
    ve->add_option("--only", ve_only, "run a single suite");
    ve->add_flag("--mutate-w3", ve_mutate, "corrupt the W3 gradient path (negative control)");
    ve->add_flag("--list", ve_list, "list suite names");

    try {
        std::vector<std::string> argv(args);
        std::reverse(argv.begin(), argv.end()); // CLI11 parses reversed vectors
        app.parse(argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            KvConfig kv;
            if (!gen_config.empty()) kv = KvConfig::load(gen_config);
            kv.set("entities", std::to_string(gen_spec.entities));
            kv.set("relations", std::to_string(gen_spec.relations));
            kv.set("triples", std::to_string(gen_spec.triples));
            kv.set("classes", std::to_string(gen_spec.classes));
            kv.set("entity_types", std::to_string(gen_spec.entity_types));
            kv.set("examples", std::to_string(gen_spec.examples));
            if (gen_task != "link" && gen_task != "re" && gen_task != "ner") {
                throw usage_error("unknown task '" + gen_task + "'");
            }
            return cmd_generate(gen_task, gen_out, gen_seed, std::move(kv));
        }
        if (tr->parsed()) {
            KvConfig kv;
            if (!tr_config.empty()) kv = KvConfig::load(tr_config);
            if (!tr_task.empty()) kv.set("task", tr_task);
            if (tr_seed_opt->count() > 0) kv.set("seed", std::to_string(tr_seed));
            if (tr_epochs_opt->count() > 0) kv.set("epochs", std::to_string(tr_epochs));
            if (tr_kshot_opt->count() > 0) kv.set("k_shot", std::to_string(tr_kshot));
            if (tr_seeds_opt->count() > 0) kv.set("seeds", std::to_string(tr_seeds));
            if (tr_batch_opt->count() > 0) kv.set("batch_size", std::to_string(tr_batch));
            if (tr_eval_opt->count() > 0) kv.set("eval_every", std::to_string(tr_eval_every));
            if (tr_lr_opt->count() > 0) kv.set("lr", std::to_string(tr_lr));
            if (tr_early_opt->count() > 0) kv.set("early_stop_at", std::to_string(tr_early));

            std::vector<std::string> lm_sweep = split_csv(tr_lm_layers);
            if (lm_sweep.empty()) lm_sweep.push_back(kv.get("l_m", "3"));
            std::vector<std::string> ablate_sweep = split_csv(tr_ablate);
            if (ablate_sweep.empty()) ablate_sweep.push_back(kv.get("ablate", "none"));
            for (const auto& a : ablate_sweep) ablation_from_string(a); // validate early

            const std::string data_dir = tr_data.empty() ? kv.get("data_dir", "") : tr_data;
            if (data_dir.empty()) throw usage_error("no dataset: pass --data or a data_dir key");
            const std::string out_dir = tr_out.empty() ? default_output_dir() : tr_out;
            return cmd_train(std::move(kv), data_dir, out_dir, lm_sweep, ablate_sweep);
        }
        if (ev->parsed()) {
            KvConfig kv;
            if (!ev_config.empty()) kv = KvConfig::load(ev_config);
            if (!ev_task.empty()) kv.set("task", ev_task);
            const std::string data_dir = ev_data.empty() ? kv.get("data_dir", "") : ev_data;
            if (data_dir.empty()) throw usage_error("no dataset: pass --data or a data_dir key");
            const std::string ckpt = ev_ckpt.empty() ? kv.get("checkpoint", "") : ev_ckpt;
            if (ckpt.empty()) throw usage_error("no checkpoint: pass --checkpoint or a checkpoint key");
            const std::string out_dir = ev_out.empty() ? default_output_dir() : ev_out;
            return cmd_eval(std::move(kv), data_dir, ckpt, out_dir, ev_split);
        }
        if (in->parsed()) {
            if (!in_trace) throw usage_error("inspect requires --trace");
            KvConfig kv;
            if (!in_config.empty()) kv = KvConfig::load(in_config);
            return cmd_inspect(std::move(kv), in_data, in_ckpt, in_entity, in_out);
        }
        if (ve->parsed()) {
            return cmd_verify(ve_only, ve_mutate, ve_list);
        }
        throw usage_error("no subcommand given");
    } catch (const usage_error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 3;
    }
}

} // namespace mkgc::cli
