#include "commands.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "genreg/checkpoint.h"
#include "genreg/codec.h"
#include "genreg/data.h"
#include "genreg/fingerprint.h"
#include "genreg/inference.h"
#include "genreg/metrics.h"
#include "genreg/training.h"
#include "genreg/vocab.h"
#include "manifest.h"

namespace genreg::cli {

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const std::string& path) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    return out;
}

std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        try {
            out.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw CLI::ValidationError("--values", "not a number: '" + cell + "'");
        }
    }
    return out;
}

std::string join_ids(const std::vector<int>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        s += (i ? " " : "") + std::to_string(ids[i]);
    }
    return s;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        out.push_back(cell);
    }
    return out;
}

// Reads a CSV with the checkpoint's feature columns when they were recorded.
Dataset load_for_checkpoint(const Checkpoint& ckpt, const std::string& path, bool require_target) {
    DatasetSchema schema;
    if (const auto it = ckpt.settings.find("feature_columns"); it != ckpt.settings.end()) {
        schema.feature_columns = split_names(it->second);
    }
    const LoadResult loaded = load_csv(path, schema, require_target);
    for (const auto& r : loaded.rejected) {
        std::cerr << "warning: " << path << " line " << r.line << ": " << r.reason << '\n';
    }
    return loaded.data;
}

Dataset load_labelled(const std::string& path) {
    const LoadResult loaded = load_csv(path);
    for (const auto& r : loaded.rejected) {
        std::cerr << "warning: " << path << " line " << r.line << ": " << r.reason << '\n';
    }
    return loaded.data;
}

// ---- shared training flags ---------------------------------------------------

struct TrainFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::map<std::string, std::string> values;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value training config file")->check(CLI::ExistingFile);
        const std::vector<std::pair<std::string, std::string>> flags = {
            {"--head", "head"},
            {"--schedule", "schedule"},
            {"--p", "fixed_p"},
            {"--p0", "p0"},
            {"--omega", "omega"},
            {"--final-p", "final_p"},
            {"--linear-slope", "linear_slope"},
            {"--exp-rate", "exp_rate"},
            {"--nw", "mixup_window"},
            {"--clem", "clem"},
            {"--steps", "steps"},
            {"--batch-size", "batch_size"},
            {"--lr", "lr"},
            {"--lambda", "lambda"},
            {"--delta", "delta"},
            {"--seed", "seed"},
            {"--val-ratio", "val_ratio"},
            {"--eval-every", "eval_every"},
            {"--hidden-dim", "hidden_dim"},
            {"--encoder-layers", "encoder_layers"},
            {"--decoder-blocks", "decoder_blocks"},
            {"--heads", "attention_heads"},
            {"--max-len", "max_len"},
            {"--buckets", "ordinal_buckets"},
        };
        const std::map<std::string, std::string> help = {
            {"head", "gr | vr | ordinal"},
            {"schedule", "paper_sigmoid | linear | exponential | fixed"},
            {"fixed_p", "sampling rate for the fixed schedule"},
            {"mixup_window", "embedding-mixup window n_w"},
            {"clem", "two-pass curriculum training on|off"},
        };
        for (const auto& [flag, key] : flags) {
            const auto it = help.find(key);
            cmd->add_option(flag, values[key], it == help.end() ? "training setting " + key : it->second);
            overrides.emplace_back(flag, key);
        }
    }

    RunConfig resolve(CLI::App* cmd) const {
        RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        for (const auto& [flag, key] : overrides) {
            if (cmd->count(flag) > 0) {
                apply_config_key(config, key, values.at(key));
            }
        }
        return config;
    }
};

std::map<std::string, std::string> snapshot(const RunConfig& config) {
    auto m = config.train.to_map();
    for (const auto& [k, v] : config.model.to_map()) {
        m["model." + k] = v;
    }
    return m;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        s += (i ? "," : "") + names[i];
    }
    return s;
}

TrainResult run_training(const Dataset& data, const std::string& vocab_path, const RunConfig& config,
                         std::ostream* log) {
    std::unique_ptr<ValueVocabulary> vocab;
    if (config.model.head == HeadKind::gr) {
        if (vocab_path.empty()) {
            throw CLI::ValidationError("--vocab", "the gr head needs a vocabulary file");
        }
        vocab = std::make_unique<ValueVocabulary>(load_vocab(vocab_path));
    }
    TrainResult result = train(data, vocab.get(), config.model, config.train, log);
    result.checkpoint.settings["feature_columns"] = join_names(data.feature_names);
    return result;
}

// ---- reports -----------------------------------------------------------------

void write_eval_outputs(const Checkpoint& ckpt, const Dataset& data, const CheckpointEvaluation& ev,
                        const std::string& dir, std::vector<std::string>& outputs) {
    fs::create_directories(dir);
    const std::string report_path = (fs::path(dir) / "report.json").string();
    open_out(report_path) << report_to_json(ev.report);
    outputs.push_back(report_path);

    const std::string interval_path = (fs::path(dir) / "intervals.csv").string();
    open_out(interval_path) << intervals_to_csv(ev.report.intervals);
    outputs.push_back(interval_path);

    const std::string pred_path = (fs::path(dir) / "predictions.csv").string();
    {
        auto out = open_out(pred_path);
        out << std::setprecision(10) << "row_id,y,y_pred,tokens,terminated_by\n";
        for (std::size_t i = 0; i < ev.predictions.size(); ++i) {
            out << i << ',' << data.targets[i] << ',' << ev.predictions[i] << ',';
            if (!ev.details.empty()) {
                out << join_ids(ev.details[i].token_ids) << ',' << to_string(ev.details[i].terminated_by);
            } else {
                out << ",NA";
            }
            out << '\n';
        }
    }
    outputs.push_back(pred_path);

    if (ckpt.config.head != HeadKind::gr) {
        return;
    }
    // token-probability and embedding diagnostics under teacher forcing
    const ValueVocabulary vocab(ckpt.vocab_values);
    const Tensor x = ckpt.standardizer.apply(data.features);
    const Tensor h = encode_features(x, ckpt.params, ckpt.config);
    const Tensor& table = ckpt.params.at("emb.token");
    std::vector<Tensor> prob_blocks;
    std::size_t prob_rows = 0;
    const std::string emb_path = (fs::path(dir) / "value_embeddings.csv").string();
    auto emb_out = open_out(emb_path);
    emb_out << std::setprecision(10) << "row_id,y";
    for (std::size_t c = 0; c < table.cols(); ++c) {
        emb_out << ",e" << c;
    }
    emb_out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        const TokenSeq seq = encode(data.targets[i], vocab, {ckpt.config.max_len, 0.001});
        if (seq.ids.empty() || !(data.targets[i] > 0.0)) {
            continue;
        }
        const auto e = aggregated_value_embedding(seq.ids, data.targets[i], vocab, table);
        emb_out << i << ',' << data.targets[i];
        for (double v : e) {
            emb_out << ',' << v;
        }
        emb_out << '\n';

        std::vector<int> ids{kSosId};
        ids.insert(ids.end(), seq.ids.begin(), seq.ids.end());
        Tensor hi(1, h.cols());
        std::copy(h.row_span(i).begin(), h.row_span(i).end(), hi.row_span(0).begin());
        const Tensor logits = decoder_forward(hi, ids, 1, ids.size(), ckpt.params, ckpt.config);
        prob_blocks.push_back(value_token_probs(logits, vocab));
        prob_rows += logits.rows();
    }
    outputs.push_back(emb_path);

    Tensor probs(prob_rows, vocab.value_count());
    std::size_t r = 0;
    for (const Tensor& block : prob_blocks) {
        for (std::size_t k = 0; k < block.rows(); ++k, ++r) {
            std::copy(block.row_span(k).begin(), block.row_span(k).end(), probs.row_span(r).begin());
        }
    }
    const auto scores = neighbor_prob_difference(probs);
    const std::string npd_path = (fs::path(dir) / "neighbor_prob.csv").string();
    auto npd = open_out(npd_path);
    npd << std::setprecision(10) << "token_id,value,score\n";
    for (std::size_t k = 0; k < scores.size(); ++k) {
        npd << kFirstValueId + static_cast<int>(k) << ',' << vocab.values()[k] << ',' << scores[k] << '\n';
    }
    outputs.push_back(npd_path);
}

void print_report(const std::string& label, const EvalReport& r) {
    std::cout << std::fixed << std::setprecision(4) << label << ": n=" << r.count << " mae=" << r.mae
              << " xauc=" << r.xauc << " pred_mean=" << r.stats.pred_mean << " label_mean=" << r.stats.label_mean
              << '\n';
}

}  // namespace

// ---- build-vocab ---------------------------------------------------------------

void add_build_vocab(CLI::App& app) {
    struct Opts {
        std::string data;
        std::string strategy = "dynamic";
        std::string out;
        std::string freq_out;
        std::string values;
        DynamicVocabOptions dyn;
        double unit = 1.0;
        std::size_t max_len = 32;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("build-vocab", "Build a value vocabulary from training targets");
    cmd->add_option("--data", o->data, "labelled CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--strategy", o->strategy, "dynamic | binary | manual")
        ->check(CLI::IsMember({"dynamic", "binary", "manual"}));
    cmd->add_option("--out", o->out, "vocabulary JSON")->required();
    cmd->add_option("--freq-out", o->freq_out, "token-frequency CSV (default <out>.freq.csv)");
    cmd->add_option("--eps", o->dyn.eps, "target relative decoding error");
    cmd->add_option("--q-start", o->dyn.q_start, "initial percentile");
    cmd->add_option("--q-end", o->dyn.q_end, "lowest percentile");
    cmd->add_option("--alpha", o->dyn.alpha, "percentile decay");
    cmd->add_option("--resolution", o->dyn.resolution, "token rounding grid (0 = none)");
    cmd->add_option("--max-iterations", o->dyn.max_iterations, "iteration cap");
    cmd->add_option("--unit", o->unit, "smallest token of the binary strategy");
    cmd->add_option("--values", o->values, "comma-separated tokens for the manual strategy");
    cmd->add_option("--max-len", o->max_len, "longest token sequence");
    cmd->callback([o, cmd] {
        if (o->strategy == "manual" && o->values.empty()) {
            throw CLI::ValidationError("--values", "the manual strategy needs --values");
        }
        if (o->strategy != "manual" && !o->values.empty()) {
            throw CLI::ValidationError("--values", "only valid with --strategy manual");
        }
        const Dataset data = load_labelled(o->data);
        ValueVocabulary vocab;
        if (o->strategy == "dynamic") {
            vocab = build_dynamic(data.targets, o->dyn);
        } else if (o->strategy == "binary") {
            vocab = build_binary(*std::max_element(data.targets.begin(), data.targets.end()), o->unit);
        } else {
            vocab = build_manual(parse_value_list(o->values));
        }
        VocabMeta meta = vocab.meta();
        meta.source_fingerprint = fingerprint_file(o->data);
        vocab = ValueVocabulary(vocab.values(), meta);
        save_vocab(vocab, o->out);

        const RoundTripReport rt = validate_roundtrip(data.targets, vocab, {o->max_len, 0.001});
        const TokenFrequency freq = token_frequency(data.targets, vocab, o->max_len);
        const std::string freq_path = o->freq_out.empty() ? o->out + ".freq.csv" : o->freq_out;
        {
            auto out = open_out(freq_path);
            out << std::setprecision(10) << "token_id,value,count\n";
            for (std::size_t i = 0; i < freq.counts.size(); ++i) {
                out << kFirstValueId + static_cast<int>(i) << ',' << vocab.values()[i] << ',' << freq.counts[i]
                    << '\n';
            }
        }
        std::cout << "strategy " << o->strategy << ": " << vocab.value_count() << " value tokens";
        if (o->strategy == "dynamic") {
            std::cout << " after " << vocab.meta().iterations << " iterations (err "
                      << vocab.meta().final_error << ")";
        }
        std::cout << "\nmax/median token frequency: " << freq.max_median_ratio() << '\n'
                  << format_roundtrip_table(rt);

        RunManifest m;
        m.command = "build-vocab";
        m.config = {{"strategy", o->strategy},
                    {"eps", std::to_string(o->dyn.eps)},
                    {"q_start", std::to_string(o->dyn.q_start)},
                    {"q_end", std::to_string(o->dyn.q_end)},
                    {"alpha", std::to_string(o->dyn.alpha)},
                    {"resolution", std::to_string(o->dyn.resolution)},
                    {"unit", std::to_string(o->unit)},
                    {"values", o->values}};
        m.inputs = {o->data};
        m.outputs = {o->out, freq_path};
        m.write(o->out);
        (void)cmd;
    });
}

// ---- encode-check --------------------------------------------------------------

void add_encode_check(CLI::App& app) {
    struct Opts {
        std::string data;
        std::string vocab;
        std::size_t max_len = 32;
        double tolerance = 0.001;
        bool strict = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("encode-check", "Report label round-trip fidelity of a vocabulary");
    cmd->add_option("--data", o->data, "labelled CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", o->vocab, "vocabulary JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--max-len", o->max_len, "longest token sequence");
    cmd->add_option("--tolerance", o->tolerance, "relative error tolerance");
    cmd->add_flag("--strict", o->strict, "exit with status 2 unless every target is within tolerance");
    cmd->callback([o] {
        const Dataset data = load_labelled(o->data);
        const ValueVocabulary vocab = load_vocab(o->vocab);
        const RoundTripReport rt = validate_roundtrip(data.targets, vocab, {o->max_len, o->tolerance});
        std::cout << format_roundtrip_table(rt);
        if (o->strict && rt.out_of_tolerance > 0) {
            throw CLI::RuntimeError("round-trip check failed", 2);
        }
    });
}

// ---- synth-data ----------------------------------------------------------------

void add_synth_data(CLI::App& app) {
    struct Opts {
        std::size_t n = 10000;
        std::size_t d = 8;
        std::uint64_t seed = 1;
        SynthParams params;
        std::string out;
        std::string test_out;
        double test_ratio = 0.2;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("synth-data", "Generate a seeded long-tailed regression dataset");
    cmd->add_option("--n", o->n, "rows");
    cmd->add_option("--d", o->d, "feature columns");
    cmd->add_option("--seed", o->seed, "generator seed");
    cmd->add_option("--scale", o->params.scale, "target scale");
    cmd->add_option("--slope", o->params.slope, "log-linear slope");
    cmd->add_option("--noise", o->params.noise, "log-space noise level");
    cmd->add_option("--cap", o->params.y_cap, "target cap");
    cmd->add_option("--zero-fraction", o->params.zero_fraction, "share of rows gated to zero");
    cmd->add_option("--resolution", o->params.resolution, "target rounding grid");
    cmd->add_option("--out", o->out, "output CSV (training part when --test-out is given)")->required();
    cmd->add_option("--test-out", o->test_out, "optional held-out CSV");
    cmd->add_option("--test-ratio", o->test_ratio, "held-out share with --test-out");
    cmd->callback([o] {
        const Dataset data = synth_longtail(o->n, o->d, o->seed, o->params);
        RunManifest m;
        m.command = "synth-data";
        m.config = {{"n", std::to_string(o->n)},
                    {"d", std::to_string(o->d)},
                    {"scale", std::to_string(o->params.scale)},
                    {"slope", std::to_string(o->params.slope)},
                    {"noise", std::to_string(o->params.noise)},
                    {"cap", std::to_string(o->params.y_cap)},
                    {"zero_fraction", std::to_string(o->params.zero_fraction)},
                    {"resolution", std::to_string(o->params.resolution)}};
        m.seeds = {{"data", std::to_string(o->seed)}};
        if (o->test_out.empty()) {
            open_out(o->out);
            save_csv(data, o->out);
            m.outputs = {o->out};
        } else {
            const auto [test, train_part] = split(data, o->test_ratio, o->seed + 1);
            open_out(o->out);
            open_out(o->test_out);
            save_csv(train_part, o->out);
            save_csv(test, o->test_out);
            m.outputs = {o->out, o->test_out};
            m.config["test_ratio"] = std::to_string(o->test_ratio);
        }
        std::cout << "wrote " << data.size() << " rows (skewness " << skewness(data.targets) << ")\n";
        m.write(o->out);
    });
}

// ---- train -----------------------------------------------------------------------

void add_train(CLI::App& app) {
    struct Opts {
        std::string data;
        std::string vocab;
        std::string out;
        std::string log;
        TrainFlags flags;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("train", "Train a generative, value-regression or bucket-ordinal head");
    cmd->add_option("--data", o->data, "labelled training CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", o->vocab, "vocabulary JSON (gr head)")->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "checkpoint path")->required();
    cmd->add_option("--log", o->log, "metrics log (default <out>.log.jsonl)");
    o->flags.add_to(cmd);
    cmd->callback([o, cmd] {
        const RunConfig config = o->flags.resolve(cmd);
        const Dataset data = load_labelled(o->data);
        const std::string log_path = o->log.empty() ? o->out + ".log.jsonl" : o->log;
        auto log = open_out(log_path);
        const auto start = std::chrono::steady_clock::now();
        const TrainResult result = run_training(data, o->vocab, config, &log);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        open_out(o->out).close();
        save_checkpoint(result.checkpoint, o->out);
        std::cout << "best validation mae " << result.best_val_mae << " at step " << result.best_step << " ("
                  << seconds << " s)\n";

        RunManifest m;
        m.command = "train";
        m.config = snapshot(config);
        m.seeds = {{"train", std::to_string(config.train.seed)}, {"model", std::to_string(config.model.seed)}};
        m.inputs = {o->data};
        if (!o->vocab.empty()) {
            m.inputs.push_back(o->vocab);
        }
        m.outputs = {o->out, log_path};
        m.write(o->out);
    });
}

// ---- predict ---------------------------------------------------------------------

void add_predict(CLI::App& app) {
    struct Opts {
        std::string ckpt;
        std::string data;
        std::string out;
        bool no_mixup = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("predict", "Predict targets for a feature CSV");
    cmd->add_option("--ckpt", o->ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", o->data, "feature CSV (a target column is ignored)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "prediction CSV")->required();
    cmd->add_flag("--no-mixup", o->no_mixup, "feed back raw token embeddings while decoding");
    cmd->callback([o] {
        const Checkpoint ckpt = load_checkpoint(o->ckpt);
        const Dataset data = load_for_checkpoint(ckpt, o->data, false);
        PredictOptions options;
        options.apply_mixup = !o->no_mixup;
        std::vector<Prediction> details;
        const auto start = std::chrono::steady_clock::now();
        const auto preds = predict_values(ckpt, data.features, &details, options);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        auto out = open_out(o->out);
        out << std::setprecision(10) << "row_id,y_pred,tokens,terminated_by\n";
        for (std::size_t i = 0; i < preds.size(); ++i) {
            out << i << ',' << preds[i] << ',';
            if (details.empty()) {
                out << ",NA\n";
            } else {
                out << join_ids(details[i].token_ids) << ',' << to_string(details[i].terminated_by) << '\n';
            }
        }
        out.close();
        std::cerr << "predicted " << preds.size() << " rows in " << seconds << " s ("
                  << (seconds > 0 ? static_cast<double>(preds.size()) / seconds : 0.0) << " rows/s)\n";
        RunManifest m;
        m.command = "predict";
        m.config = {{"apply_mixup", o->no_mixup ? "0" : "1"}};
        m.inputs = {o->ckpt, o->data};
        m.outputs = {o->out};
        m.write(o->out);
    });
}

// ---- evaluate --------------------------------------------------------------------

void add_evaluate(CLI::App& app) {
    struct Opts {
        std::string ckpt;
        std::string data;
        std::string out_dir;
        std::vector<std::string> compare;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("evaluate", "Evaluate checkpoints on a labelled CSV");
    cmd->add_option("--ckpt", o->ckpt, "checkpoint")->check(CLI::ExistingFile);
    cmd->add_option("--data", o->data, "labelled CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out-dir", o->out_dir, "directory for report.json and CSV tables");
    cmd->add_option("--compare", o->compare, "two or more checkpoints to compare side by side")
        ->check(CLI::ExistingFile);
    cmd->callback([o] {
        if (o->compare.empty() == o->ckpt.empty()) {
            throw CLI::ValidationError("--ckpt", "give exactly one of --ckpt or --compare");
        }
        if (!o->compare.empty()) {
            if (o->compare.size() < 2) {
                throw CLI::ValidationError("--compare", "needs at least two checkpoints");
            }
            std::cout << std::left << std::setw(40) << "checkpoint" << std::right << std::setw(8) << "head"
                      << std::setw(12) << "mae" << std::setw(10) << "xauc" << std::setw(12) << "pred_mean"
                      << std::setw(12) << "label_mean" << '\n';
            for (const auto& path : o->compare) {
                const Checkpoint ckpt = load_checkpoint(path);
                const Dataset data = load_for_checkpoint(ckpt, o->data, true);
                const auto ev = evaluate_checkpoint(ckpt, data);
                std::cout << std::left << std::setw(40) << path << std::right << std::setw(8)
                          << to_string(ckpt.config.head) << std::fixed << std::setprecision(4) << std::setw(12)
                          << ev.report.mae << std::setw(10) << ev.report.xauc << std::setw(12)
                          << ev.report.stats.pred_mean << std::setw(12) << ev.report.stats.label_mean << '\n';
            }
            return;
        }
        const Checkpoint ckpt = load_checkpoint(o->ckpt);
        const Dataset data = load_for_checkpoint(ckpt, o->data, true);
        const auto ev = evaluate_checkpoint(ckpt, data);
        print_report(o->ckpt, ev.report);
        if (o->out_dir.empty()) {
            std::cout << report_to_json(ev.report);
            return;
        }
        RunManifest m;
        m.command = "evaluate";
        m.inputs = {o->ckpt, o->data};
        write_eval_outputs(ckpt, data, ev, o->out_dir, m.outputs);
        m.write((fs::path(o->out_dir) / "report.json").string());
    });
}

// ---- ablate ----------------------------------------------------------------------

void add_ablate(CLI::App& app) {
    struct Opts {
        std::string train_path;
        std::string test_path;
        std::string vocab;
        std::string out_dir;
        std::size_t seeds = 1;
        TrainFlags flags;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("ablate", "Run the curriculum/mixup ablation grid (rows a-h)");
    cmd->add_option("--train", o->train_path, "labelled training CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", o->test_path, "labelled test CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", o->vocab, "vocabulary JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out-dir", o->out_dir, "output directory")->required();
    cmd->add_option("--seeds", o->seeds, "seeds per row (1..n)");
    o->flags.add_to(cmd);
    cmd->callback([o, cmd] {
        struct Row {
            std::string id;
            std::string name;
            std::vector<std::pair<std::string, std::string>> keys;
        };
        const std::vector<Row> rows = {
            {"a", "GR", {{"clem", "1"}, {"schedule", "paper_sigmoid"}, {"mixup_window", "2"}}},
            {"b", "w/o CLEM", {{"clem", "0"}, {"mixup_window", "0"}}},
            {"c", "EM with TF", {{"clem", "1"}, {"schedule", "fixed"}, {"fixed_p", "1"}, {"mixup_window", "2"}}},
            {"d", "CL w/o EM", {{"clem", "1"}, {"schedule", "paper_sigmoid"}, {"mixup_window", "0"}}},
            {"e", "linear", {{"clem", "1"}, {"schedule", "linear"}, {"mixup_window", "2"}}},
            {"f", "exponential", {{"clem", "1"}, {"schedule", "exponential"}, {"mixup_window", "2"}}},
            {"g", "p=0.5", {{"clem", "1"}, {"schedule", "fixed"}, {"fixed_p", "0.5"}, {"mixup_window", "2"}}},
            {"h", "p=0", {{"clem", "1"}, {"schedule", "fixed"}, {"fixed_p", "0"}, {"mixup_window", "2"}}},
        };
        const RunConfig base = o->flags.resolve(cmd);
        const Dataset train_data = load_labelled(o->train_path);
        const Dataset test_data = load_labelled(o->test_path);
        fs::create_directories(o->out_dir);
        const std::string table_path = (fs::path(o->out_dir) / "ablation.csv").string();
        auto table = open_out(table_path);
        table << std::setprecision(10) << "row,method,seed,mae,xauc\n";
        RunManifest m;
        m.command = "ablate";
        m.config = snapshot(base);
        m.inputs = {o->train_path, o->test_path, o->vocab};
        std::cout << "row  method          mae       xauc\n";
        for (const Row& row : rows) {
            double mae_sum = 0.0;
            double xauc_sum = 0.0;
            for (std::size_t s = 0; s < o->seeds; ++s) {
                RunConfig config = base;
                config.model.head = HeadKind::gr;
                for (const auto& [k, v] : row.keys) {
                    apply_config_key(config, k, v);
                }
                apply_config_key(config, "seed", std::to_string(base.train.seed + s));
                TrainResult result = run_training(train_data, o->vocab, config, nullptr);
                const auto ev = evaluate_checkpoint(result.checkpoint, test_data);
                table << row.id << ',' << row.name << ',' << config.train.seed << ',' << ev.report.mae << ','
                      << ev.report.xauc << '\n';
                mae_sum += ev.report.mae;
                xauc_sum += ev.report.xauc;
                m.seeds[row.id + "." + std::to_string(s)] = std::to_string(config.train.seed);
            }
            const auto n = static_cast<double>(o->seeds);
            std::cout << "(" << row.id << ")  " << std::left << std::setw(14) << row.name << std::right
                      << std::fixed << std::setprecision(4) << std::setw(8) << mae_sum / n << std::setw(10)
                      << xauc_sum / n << '\n';
        }
        table.close();
        m.outputs = {table_path};
        m.write(table_path);
    });
}

}  // namespace genreg::cli
