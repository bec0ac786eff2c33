#include "ifdiff/config.h"

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ifdiff/errors.h"

namespace ifdiff {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) throw ConfigError("invalid value for " + key + ": '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + value + "'");
}

}  // namespace

void validate(const TrainConfig& c) {
    if (!(c.lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (c.alpha < 0.0 || c.lambda < 0.0) throw ConfigError("loss weights must be >= 0");
    if (c.batch_size < 1 || c.grad_accum_steps < 1) throw ConfigError("batch_size and grad_accum_steps must be >= 1");
    if (c.total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (!(c.clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

void apply_setting(const std::string& key, const std::string& value, DenoiserConfig& m, TrainConfig& t) {
    if (key == "hidden") m.hidden = parse_number<int>(key, value);
    else if (key == "n_layers") m.n_layers = parse_number<int>(key, value);
    else if (key == "act") m.act = ad::activation_from_string(value);
    else if (key == "use_shared_center") m.use_shared_center = parse_bool(key, value);
    else if (key == "freeze_type_emb") m.freeze_type_emb = parse_bool(key, value);
    else if (key == "k") m.k = parse_number<int>(key, value);
    else if (key == "T") m.T = parse_number<int>(key, value);
    else if (key == "schedule") m.schedule = schedule_kind_from_string(value);
    else if (key == "init_seed") m.init_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "lr") t.lr = parse_number<double>(key, value);
    else if (key == "weight_decay") t.weight_decay = parse_number<double>(key, value);
    else if (key == "batch_size") t.batch_size = parse_number<int>(key, value);
    else if (key == "grad_accum_steps") t.grad_accum_steps = parse_number<int>(key, value);
    else if (key == "total_steps") t.total_steps = parse_number<long>(key, value);
    else if (key == "alpha") t.alpha = parse_number<double>(key, value);
    else if (key == "lambda") t.lambda = parse_number<double>(key, value);
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "clip_norm") t.clip_norm = parse_number<double>(key, value);
    else if (key == "attn_all_layers") t.attn_all_layers = parse_bool(key, value);
    else throw ConfigError("unknown config key: " + key);
}

void apply_settings(const std::map<std::string, std::string>& kv, DenoiserConfig& model, TrainConfig& train) {
    for (const auto& [k, v] : kv) apply_setting(k, v, model, train);
}

std::string config_to_json(const DenoiserConfig& m, const TrainConfig& t) {
    json doc;
    doc["model"] = {{"hidden", m.hidden},
                    {"n_layers", m.n_layers},
                    {"act", ad::to_string(m.act)},
                    {"use_shared_center", m.use_shared_center},
                    {"freeze_type_emb", m.freeze_type_emb},
                    {"k", m.k},
                    {"T", m.T},
                    {"schedule", to_string(m.schedule)},
                    {"init_seed", m.init_seed}};
    doc["train"] = {{"lr", t.lr},
                    {"weight_decay", t.weight_decay},
                    {"batch_size", t.batch_size},
                    {"grad_accum_steps", t.grad_accum_steps},
                    {"total_steps", t.total_steps},
                    {"alpha", t.alpha},
                    {"lambda", t.lambda},
                    {"seed", t.seed},
                    {"clip_norm", t.clip_norm},
                    {"attn_all_layers", t.attn_all_layers},
                    {"beta1", t.beta1},
                    {"beta2", t.beta2},
                    {"adam_eps", t.adam_eps}};
    return doc.dump();
}

void config_from_json(const std::string& text, DenoiserConfig& m, TrainConfig& t) {
    try {
        const json doc = json::parse(text);
        const auto& jm = doc.at("model");
        m.hidden = jm.at("hidden").get<int>();
        m.n_layers = jm.at("n_layers").get<int>();
        m.act = ad::activation_from_string(jm.at("act").get<std::string>());
        m.use_shared_center = jm.at("use_shared_center").get<bool>();
        m.freeze_type_emb = jm.at("freeze_type_emb").get<bool>();
        m.k = jm.at("k").get<int>();
        m.T = jm.at("T").get<int>();
        m.schedule = schedule_kind_from_string(jm.at("schedule").get<std::string>());
        m.init_seed = jm.at("init_seed").get<std::uint64_t>();
        const auto& jt = doc.at("train");
        t.lr = jt.at("lr").get<double>();
        t.weight_decay = jt.at("weight_decay").get<double>();
        t.batch_size = jt.at("batch_size").get<int>();
        t.grad_accum_steps = jt.at("grad_accum_steps").get<int>();
        t.total_steps = jt.at("total_steps").get<long>();
        t.alpha = jt.at("alpha").get<double>();
        t.lambda = jt.at("lambda").get<double>();
        t.seed = jt.at("seed").get<std::uint64_t>();
        t.clip_norm = jt.at("clip_norm").get<double>();
        t.attn_all_layers = jt.at("attn_all_layers").get<bool>();
        t.beta1 = jt.at("beta1").get<double>();
        t.beta2 = jt.at("beta2").get<double>();
        t.adam_eps = jt.at("adam_eps").get<double>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad config block: ") + e.what());
    }
}

}  // namespace ifdiff
