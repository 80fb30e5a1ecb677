#include "mkgc/runio.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace mkgc {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool is_meta_key(const std::string& k) {
    return k == "command" || k == "timestamp" || k == "output_dir";
}

} // namespace

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig kv;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw parse_error("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw parse_error("config line " + std::to_string(line_no) + ": empty key");
        }
        kv.values_[key] = value;
    }
    return kv;
}

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw parse_error("config key '" + key + "': '" + it->second + "' is not a number");
    }
}

std::size_t KvConfig::get_size(const std::string& key, std::size_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        const long long v = std::stoll(it->second);
        if (v < 0) throw parse_error("");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw parse_error("config key '" + key + "': '" + it->second +
                          "' is not a nonnegative integer");
    }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw parse_error("config key '" + key + "': '" + it->second + "' is not an integer");
    }
}

std::string KvConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::string KvConfig::hash_hex() const {
    // FNV-1a 64 over sorted key=value lines, meta keys excluded.
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [k, v] : values_) {
        if (is_meta_key(k)) continue;
        const std::string line = k + "=" + v + "\n";
        for (unsigned char c : line) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void KvConfig::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write config file '" + path + "'");
    os << to_text();
}

ModelConfig model_config_from_kv(const KvConfig& kv) {
    ModelConfig cfg;
    cfg.d = kv.get_size("d", cfg.d);
    cfg.n_heads = kv.get_size("n_heads", cfg.n_heads);
    cfg.d_m = kv.get_size("d_m", cfg.d_m);
    cfg.l_t = kv.get_size("l_t", cfg.l_t);
    cfg.l_v = kv.get_size("l_v", cfg.l_v);
    cfg.l_m = kv.get_size("l_m", cfg.l_m);
    cfg.img_h = kv.get_size("img_h", cfg.img_h);
    cfg.img_w = kv.get_size("img_w", cfg.img_w);
    cfg.img_c = kv.get_size("img_c", cfg.img_c);
    cfg.patch = kv.get_size("patch", cfg.patch);
    cfg.images_per_entity = kv.get_size("images_per_entity", cfg.images_per_entity);
    cfg.max_seq_len = kv.get_size("max_seq_len", cfg.max_seq_len);
    cfg.eps = kv.get_double("eps", cfg.eps);
    cfg.ablation = ablation_from_string(kv.get("ablate", "none"));
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from_kv(const KvConfig& kv) {
    TrainConfig cfg;
    cfg.task = kv.get("task", cfg.task);
    cfg.epochs = kv.get_size("epochs", cfg.epochs);
    cfg.phase1_epochs = kv.get_size("phase1_epochs", cfg.phase1_epochs);
    cfg.batch_size = kv.get_size("batch_size", cfg.batch_size);
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.eval_every = kv.get_size("eval_every", cfg.eval_every);
    cfg.early_stop_at = kv.get_double("early_stop_at", cfg.early_stop_at);
    cfg.k_shot = kv.get_size("k_shot", cfg.k_shot);
    cfg.n_seeds = kv.get_size("seeds", cfg.n_seeds);
    {
        const std::string freeze = kv.get("freeze", "");
        std::string cur;
        for (char ch : freeze + ",") {
            if (ch == ',') {
                if (!cur.empty()) cfg.freeze_prefixes.push_back(cur);
                cur.clear();
            } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                cur.push_back(ch);
            }
        }
    }
    cfg.validate();
    return cfg;
}

SyntheticSpec synthetic_spec_from_kv(const KvConfig& kv) {
    SyntheticSpec spec;
    spec.entities = kv.get_size("entities", spec.entities);
    spec.relations = kv.get_size("relations", spec.relations);
    spec.triples = kv.get_size("triples", spec.triples);
    spec.classes = kv.get_size("classes", spec.classes);
    spec.entity_types = kv.get_size("entity_types", spec.entity_types);
    spec.examples = kv.get_size("examples", spec.examples);
    return spec;
}

void materialize_model_config(KvConfig& kv, const ModelConfig& cfg) {
    kv.set("d", std::to_string(cfg.d));
    kv.set("n_heads", std::to_string(cfg.n_heads));
    kv.set("d_m", std::to_string(cfg.d_m));
    kv.set("l_t", std::to_string(cfg.l_t));
    kv.set("l_v", std::to_string(cfg.l_v));
    kv.set("l_m", std::to_string(cfg.l_m));
    kv.set("img_h", std::to_string(cfg.img_h));
    kv.set("img_w", std::to_string(cfg.img_w));
    kv.set("img_c", std::to_string(cfg.img_c));
    kv.set("patch", std::to_string(cfg.patch));
    kv.set("images_per_entity", std::to_string(cfg.images_per_entity));
    kv.set("max_seq_len", std::to_string(cfg.max_seq_len));
    char eps[32];
    std::snprintf(eps, sizeof(eps), "%.9g", cfg.eps);
    kv.set("eps", eps);
    kv.set("ablate", to_string(cfg.ablation));
}

void materialize_train_config(KvConfig& kv, const TrainConfig& cfg) {
    kv.set("task", cfg.task);
    kv.set("epochs", std::to_string(cfg.epochs));
    kv.set("phase1_epochs", std::to_string(cfg.phase1_epochs));
    kv.set("batch_size", std::to_string(cfg.batch_size));
    char lr[32];
    std::snprintf(lr, sizeof(lr), "%.9g", cfg.lr);
    kv.set("lr", lr);
    kv.set("seed", std::to_string(cfg.seed));
    kv.set("eval_every", std::to_string(cfg.eval_every));
    char es[32];
    std::snprintf(es, sizeof(es), "%.9g", cfg.early_stop_at);
    kv.set("early_stop_at", es);
    kv.set("k_shot", std::to_string(cfg.k_shot));
    kv.set("seeds", std::to_string(cfg.n_seeds));
    std::string freeze;
    for (const auto& p : cfg.freeze_prefixes) freeze += (freeze.empty() ? "" : ",") + p;
    kv.set("freeze", freeze);
}

std::string effective_config_hash(const KvConfig& kv) {
    KvConfig canon;
    materialize_model_config(canon, model_config_from_kv(kv));
    materialize_train_config(canon, train_config_from_kv(kv));
    return canon.hash_hex();
}

std::string default_output_dir() {
    const char* env = std::getenv("MKG_OUTPUT_DIR");
    if (env != nullptr && env[0] != '\0') return env;
    return "out";
}

void write_manifest(const std::string& out_dir, const std::string& command, KvConfig resolved) {
    fs::create_directories(out_dir);
    resolved.set("command", command);
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    resolved.set("timestamp", stamp);
    resolved.set("output_dir", out_dir);
    resolved.save((fs::path(out_dir) / "manifest.txt").string());
}

void write_report(const std::string& out_dir, const MetricsReport& report) {
    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "report.txt", std::ios::binary);
        if (!os) throw io_error("cannot write report under '" + out_dir + "'");
        os << report.to_kv();
    }
    {
        std::ofstream os(fs::path(out_dir) / "report.tsv", std::ios::binary);
        os << report.tsv_header() << '\n' << report.tsv_row() << '\n';
    }
}

void append_tsv_row(const std::string& path, const std::string& header, const std::string& row) {
    const bool fresh = !fs::exists(path);
    std::ofstream os(path, std::ios::binary | std::ios::app);
    if (!os) throw io_error("cannot append to '" + path + "'");
    if (fresh) os << header << '\n';
    os << row << '\n';
}

} // namespace mkgc
