// ifdiff command-line interface: featurize, train, sample, eval, analyze.
//
// Exit codes: 0 success, 1 E_INTERNAL, 2 E_USAGE, 3 E_PARSE, 4 E_IO, 5 E_EMPTY_DATASET,
// 6 E_CHECKPOINT, 7 E_NUMERIC, 8 E_CONFIG, 9 E_SHAPE, 10 E_GEOMETRY, 11 E_DATASET.
// Failures print one line "<code>: <message>" on stderr.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ifdiff/amino.h"
#include "ifdiff/analysis.h"
#include "ifdiff/checkpoint.h"
#include "ifdiff/dataset.h"
#include "ifdiff/errors.h"
#include "ifdiff/sampler.h"
#include "ifdiff/trainer.h"

namespace fs = std::filesystem;
using namespace ifdiff;

namespace {

int exit_code_for(const std::string& code) {
    static const std::map<std::string, int> codes = {
        {"E_USAGE", 2},      {"E_PARSE", 3}, {"E_IO", 4},    {"E_EMPTY_DATASET", 5}, {"E_CHECKPOINT", 6},
        {"E_NUMERIC", 7},    {"E_CONFIG", 8}, {"E_SHAPE", 9}, {"E_GEOMETRY", 10},     {"E_DATASET", 11},
    };
    auto it = codes.find(code);
    return it == codes.end() ? 1 : it->second;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

struct FeaturizeArgs {
    std::string in;
    std::string cache_dir;
    int k = kDefaultK;
    int jobs = 1;
};

int run_featurize(const FeaturizeArgs& a) {
    auto data = load_dataset(a.in);
    for (const auto& s : data.skipped) std::cerr << "warning: skipped " << s << "\n";
    if (data.proteins.empty()) throw DatasetError("E_EMPTY_DATASET", "no parseable backbone files in " + a.in);
    auto graphs = featurize_all(data.proteins, a.k, a.cache_dir, a.jobs, &std::cerr);
    std::cout << graphs.size() << " graphs cached in " << a.cache_dir << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string split;
    std::string config;
    std::string out;
    std::string cache_dir;
    std::string log;
    std::string resume;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flag_overrides;
    int progress_every = 50;
};

int run_train(const TrainArgs& a) {
    DenoiserConfig model;
    TrainConfig train;
    if (!a.config.empty()) apply_settings(load_key_values(a.config), model, train);
    for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + s);
        apply_setting(s.substr(0, eq), s.substr(eq + 1), model, train);
    }
    apply_settings(a.flag_overrides, model, train);
    validate(train);

    auto data = load_dataset(a.data);
    for (const auto& s : data.skipped) std::cerr << "warning: skipped " << s << "\n";
    std::vector<ProteinBackbone> selected;
    if (!a.split.empty()) {
        const auto ids = read_split_file(a.split);
        std::set<std::string> wanted(ids.begin(), ids.end());
        for (auto& p : data.proteins) {
            if (wanted.erase(p.id)) selected.push_back(std::move(p));
        }
        for (const auto& missing : wanted) std::cerr << "warning: split id not found in dataset: " << missing << "\n";
    } else {
        selected = std::move(data.proteins);
    }
    if (selected.empty()) throw DatasetError("E_EMPTY_DATASET", "no training proteins found in " + a.data);

    std::unique_ptr<Trainer> trainer;
    if (!a.resume.empty()) {
        trainer = std::make_unique<Trainer>(load_checkpoint(a.resume));
        trainer->config().total_steps = train.total_steps;
    } else {
        trainer = std::make_unique<Trainer>(model, train);
    }
    const int k = trainer->model().config().k;
    auto graphs = featurize_all(selected, k, a.cache_dir, 1, &std::cerr);

    const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
    auto log = open_out(log_path);
    write_log_header(log);
    const long remaining = std::max<long>(0, train.total_steps - static_cast<long>(trainer->step()));
    std::cerr << "training " << graphs.size() << " proteins for " << remaining << " steps ("
              << trainer->model().params().n_scalars() << " parameters)\n";
    train_loop(*trainer, graphs, remaining, &log, [&](const StepMetrics& m) {
        if (a.progress_every > 0 && (m.step + 1) % static_cast<std::uint64_t>(a.progress_every) == 0) {
            std::cerr << "step " << m.step + 1 << " loss " << m.total << " pred " << m.l_pred << " attn " << m.l_attn << "\n";
        }
        return true;
    });
    save_checkpoint(a.out, trainer->checkpoint());
    std::cerr << "wrote " << a.out << " and " << log_path << "\n";
    return 0;
}

void write_trace_json(const std::string& path, const ProteinBackbone& protein, const SampleResult& res) {
    using nlohmann::json;
    json doc;
    doc["id"] = protein.id;
    json steps = json::array();
    for (const auto& [t, tp] : res.trace.steps) steps.push_back(json::array({t, tp}));
    doc["steps"] = steps;
    json states = json::array();
    for (const auto& s : res.trace.states) states.push_back(encode_sequence(s));
    doc["states"] = states;
    doc["denoiser_calls"] = res.trace.denoiser_calls;
    json logits = json::array();
    for (Eigen::Index r = 0; r < res.trace.final_logits.rows(); ++r) {
        std::vector<double> row(res.trace.final_logits.row(r).data(), res.trace.final_logits.row(r).data() + res.trace.final_logits.cols());
        logits.push_back(row);
    }
    doc["final_logits"] = logits;
    json layers = json::array();
    for (const auto& l : res.trace.layers) {
        json attn = json::array();
        for (Eigen::Index r = 0; r < l.align_attn.rows(); ++r) {
            attn.push_back(std::vector<double>(l.align_attn.row(r).data(), l.align_attn.row(r).data() + l.align_attn.cols()));
        }
        json layer;
        layer["align_attn"] = attn;
        if (l.sc_attn.size()) layer["sc_attn"] = std::vector<double>(l.sc_attn.data(), l.sc_attn.data() + l.sc_attn.size());
        layers.push_back(layer);
    }
    doc["layers"] = layers;
    auto out = open_out(path);
    out << doc.dump() << "\n";
}

struct SampleArgs {
    std::string ckpt;
    std::string in;
    int stride = 500;
    std::uint64_t seed = 0;
    std::string trace;
};

int run_sample(const SampleArgs& a) {
    const auto ckpt = load_checkpoint(a.ckpt);
    auto model = model_from_checkpoint(ckpt);
    const auto schedule = make_schedule(ckpt.model.T, ckpt.model.schedule);
    const auto protein = load_backbone(a.in);
    const auto graph = featurize(protein, ckpt.model.k);
    const auto res = sample_sequence(graph, *model, schedule, a.stride, a.seed);
    std::cout << encode_sequence(res.types) << "\n";
    const std::string trace_path = a.trace.empty() ? protein.id + ".trace.json" : a.trace;
    write_trace_json(trace_path, protein, res);
    std::cerr << "recovery vs native " << recovery(res.types, graph.true_types) << ", trace " << trace_path << "\n";
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string split = "all";
    std::string out;
    int stride = 500;
    std::uint64_t seed = 0;
    int jobs = 1;
};

int run_eval(const EvalArgs& a) {
    const auto split = split_from_string(a.split);
    const auto ckpt = load_checkpoint(a.ckpt);
    auto model = model_from_checkpoint(ckpt);
    const auto schedule = make_schedule(ckpt.model.T, ckpt.model.schedule);
    auto data = load_dataset(a.data);
    for (const auto& s : data.skipped) std::cerr << "warning: skipped " << s << "\n";
    if (data.proteins.empty()) throw DatasetError("E_EMPTY_DATASET", "no parseable backbone files in " + a.data);
    const auto graphs = featurize_all(data.proteins, ckpt.model.k, "", a.jobs, nullptr);
    const auto report = evaluate_graphs(graphs, split, *model, schedule, {a.stride, a.seed, a.jobs});
    if (a.out.empty()) {
        write_report_csv(std::cout, report);
    } else {
        auto out = open_out(a.out);
        write_report_csv(out, report);
    }
    std::cerr << report.proteins.size() << " proteins in split '" << a.split << "': median recovery "
              << report.median_recovery << ", perplexity " << report.pooled_perplexity << "\n";
    return 0;
}

struct AnalyzeArgs {
    int T = 500;
    std::string kind = "cosine";
    std::string out;
    std::string ckpt;
    std::string in;
    std::string out_dir = ".";
    int stride = 500;
    std::uint64_t seed = 0;
    std::string with_sc;
    std::string without_sc;
    std::string data;
};

int run_analyze_schedule(const AnalyzeArgs& a) {
    const auto s = make_schedule(a.T, schedule_kind_from_string(a.kind));
    if (a.out.empty()) {
        write_schedule_csv(std::cout, s);
    } else {
        auto out = open_out(a.out);
        write_schedule_csv(out, s);
    }
    return 0;
}

int run_analyze_trace(const AnalyzeArgs& a, bool kl) {
    const auto ckpt = load_checkpoint(a.ckpt);
    auto model = model_from_checkpoint(ckpt);
    const auto schedule = make_schedule(ckpt.model.T, ckpt.model.schedule);
    const auto protein = load_backbone(a.in);
    const auto graph = featurize(protein, ckpt.model.k);
    const auto res = sample_sequence(graph, *model, schedule, a.stride, a.seed);
    fs::create_directories(a.out_dir);
    const auto path = (fs::path(a.out_dir) / (protein.id + (kl ? ".kl.csv" : ".attn.csv"))).string();
    auto out = open_out(path);
    if (kl) {
        write_kl_csv(out, layer_kl(res.trace.layers));
    } else {
        export_alignment_attention(out, res.trace.layers, graph.true_types, res.types);
    }
    std::cout << path << "\n";
    return 0;
}

int run_analyze_ablation(const AnalyzeArgs& a) {
    const auto ck_a = load_checkpoint(a.with_sc);
    const auto ck_b = load_checkpoint(a.without_sc);
    auto train_a = ck_a.train;
    auto train_b = ck_b.train;
    train_b.total_steps = train_a.total_steps;
    if (!(train_a == train_b)) throw ConfigError("sc-ablation checkpoints were trained with different settings");
    auto with_sc = model_from_checkpoint(ck_a);
    auto without_sc = model_from_checkpoint(ck_b);
    auto data = load_dataset(a.data);
    if (data.proteins.empty()) throw DatasetError("E_EMPTY_DATASET", "no parseable backbone files in " + a.data);
    const auto graphs = featurize_all(data.proteins, ck_a.model.k, "", 1, nullptr);
    const auto rows = compare_sc_ablation(graphs, *with_sc, *without_sc, a.seed);
    if (a.out.empty()) {
        write_ablation_csv(std::cout, rows);
    } else {
        auto out = open_out(a.out);
        write_ablation_csv(out, rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ifdiff: discrete-diffusion inverse folding"};
    app.require_subcommand(1);

    FeaturizeArgs fa;
    auto* featurize_cmd = app.add_subcommand("featurize", "Build and cache residue graphs for every backbone file");
    featurize_cmd->add_option("--in", fa.in, "Directory of backbone JSON files")->required();
    featurize_cmd->add_option("--cache-dir", fa.cache_dir, "Directory for cached <id>.graph.json files")->required();
    featurize_cmd->add_option("--k", fa.k, "Neighbors per residue");
    featurize_cmd->add_option("--jobs", fa.jobs, "Worker threads");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a denoiser and write a checkpoint plus a CSV log");
    train_cmd->add_option("--data", ta.data, "Directory of backbone JSON files")->required();
    train_cmd->add_option("--split", ta.split, "Text file with one training protein id per line");
    train_cmd->add_option("--config", ta.config, "Flat key=value config file");
    train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
    train_cmd->add_option("--cache-dir", ta.cache_dir, "Reuse graphs cached by featurize");
    train_cmd->add_option("--log", ta.log, "Training log CSV (default <out>.log.csv)");
    train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint");
    train_cmd->add_option("--set", ta.sets, "Override any config key (key=value), repeatable");
    train_cmd->add_option("--progress-every", ta.progress_every, "Print a progress line every N steps (0 = never)");
    const std::vector<std::pair<std::string, std::string>> flag_keys = {
        {"--steps", "total_steps"},   {"--lr", "lr"},       {"--weight-decay", "weight_decay"},
        {"--batch-size", "batch_size"}, {"--grad-accum", "grad_accum_steps"}, {"--alpha", "alpha"},
        {"--lambda", "lambda"},       {"--seed", "seed"},   {"--T", "T"},
        {"--hidden", "hidden"},       {"--n-layers", "n_layers"}, {"--k", "k"},
        {"--schedule", "schedule"},   {"--act", "act"},     {"--init-seed", "init_seed"},
        {"--clip-norm", "clip_norm"},
    };
    std::map<std::string, std::string> flag_values;
    for (const auto& [flag, key] : flag_keys) {
        train_cmd->add_option(flag, flag_values[key], "Override config key '" + key + "'");
    }
    bool no_sc = false, freeze_emb = false, attn_all = false;
    train_cmd->add_flag("--no-shared-center", no_sc, "Disable the shared-center sublayer");
    train_cmd->add_flag("--freeze-type-emb", freeze_emb, "Keep the amino-acid type embeddings fixed");
    train_cmd->add_flag("--attn-all-layers", attn_all, "Average the alignment loss over every layer");

    SampleArgs sa;
    auto* sample_cmd = app.add_subcommand("sample", "Design a sequence for one backbone");
    sample_cmd->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
    sample_cmd->add_option("--in", sa.in, "Backbone JSON file")->required();
    sample_cmd->add_option("--stride", sa.stride, "Timesteps skipped per denoiser call");
    sample_cmd->add_option("--seed", sa.seed, "Sampling seed");
    sample_cmd->add_option("--trace", sa.trace, "Trace JSON path (default <id>.trace.json)");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Recovery and perplexity over a dataset split");
    eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint")->required();
    eval_cmd->add_option("--data", ea.data, "Directory of backbone JSON files")->required();
    eval_cmd->add_option("--split", ea.split, "short | single | all")->check(CLI::IsMember({"short", "single", "all"}));
    eval_cmd->add_option("--out", ea.out, "Report CSV (default standard output)");
    eval_cmd->add_option("--stride", ea.stride, "Timesteps skipped per denoiser call");
    eval_cmd->add_option("--seed", ea.seed, "Sampling seed");
    eval_cmd->add_option("--jobs", ea.jobs, "Worker threads");

    AnalyzeArgs aa;
    auto* analyze_cmd = app.add_subcommand("analyze", "Diagnostic exports");
    analyze_cmd->require_subcommand(1);
    auto* schedule_cmd = analyze_cmd->add_subcommand("schedule", "Dump t,alpha,alpha_bar as CSV");
    schedule_cmd->add_option("--T", aa.T, "Diffusion steps");
    schedule_cmd->add_option("--kind", aa.kind, "cosine | linear");
    schedule_cmd->add_option("--out", aa.out, "CSV path (default standard output)");
    auto* kl_cmd = analyze_cmd->add_subcommand("kl", "Layer-wise log-KL of node representations");
    auto* attn_cmd = analyze_cmd->add_subcommand("attn", "Alignment attention per layer and residue");
    for (auto* cmd : {kl_cmd, attn_cmd}) {
        cmd->add_option("--ckpt", aa.ckpt, "Checkpoint")->required();
        cmd->add_option("--in", aa.in, "Backbone JSON file")->required();
        cmd->add_option("--out-dir", aa.out_dir, "Output directory");
        cmd->add_option("--stride", aa.stride, "Timesteps skipped per denoiser call");
        cmd->add_option("--seed", aa.seed, "Sampling seed");
    }
    auto* sc_cmd = analyze_cmd->add_subcommand("sc-ablation", "Paired log-KL series with and without the shared center");
    sc_cmd->add_option("--with-sc", aa.with_sc, "Checkpoint trained with the shared center")->required();
    sc_cmd->add_option("--without-sc", aa.without_sc, "Checkpoint trained without it")->required();
    sc_cmd->add_option("--data", aa.data, "Directory of backbone JSON files")->required();
    sc_cmd->add_option("--out", aa.out, "CSV path (default standard output)");
    sc_cmd->add_option("--seed", aa.seed, "Noise seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "E_USAGE: " << e.what() << "\n";
        return exit_code_for("E_USAGE");
    }

    try {
        if (*featurize_cmd) return run_featurize(fa);
        if (*train_cmd) {
            for (const auto& [key, value] : flag_values) {
                if (!value.empty()) ta.flag_overrides[key] = value;
            }
            if (no_sc) ta.flag_overrides["use_shared_center"] = "false";
            if (freeze_emb) ta.flag_overrides["freeze_type_emb"] = "true";
            if (attn_all) ta.flag_overrides["attn_all_layers"] = "true";
            return run_train(ta);
        }
        if (*sample_cmd) return run_sample(sa);
        if (*eval_cmd) return run_eval(ea);
        if (*schedule_cmd) return run_analyze_schedule(aa);
        if (*kl_cmd) return run_analyze_trace(aa, true);
        if (*attn_cmd) return run_analyze_trace(aa, false);
        if (*sc_cmd) return run_analyze_ablation(aa);
    } catch (const Error& e) {
        std::cerr << e.code() << ": " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "E_INTERNAL: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
