#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mkgc/config.hpp"
#include "mkgc/data.hpp"
#include "mkgc/training.hpp"

namespace mkgc {

// Flat `key = value` text configuration. Command-line flags override file
// values; every effective value is echoed into the run manifest.
class KvConfig {
public:
    static KvConfig load(const std::string& path);
    static KvConfig parse(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

    // Sorted `key = value` lines; meta keys (command, timestamp, output_dir)
    // are excluded from the hash so a rerun from a manifest reproduces it.
    std::string to_text() const;
    std::string hash_hex() const;
    void save(const std::string& path) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

ModelConfig model_config_from_kv(const KvConfig& kv);
TrainConfig train_config_from_kv(const KvConfig& kv);
SyntheticSpec synthetic_spec_from_kv(const KvConfig& kv);

// All effective values, defaults materialized.
void materialize_model_config(KvConfig& kv, const ModelConfig& cfg);
void materialize_train_config(KvConfig& kv, const TrainConfig& cfg);

// Hash of the effective model + training configuration only, so a rerun from
// a manifest (which carries extra bookkeeping keys) reproduces it.
std::string effective_config_hash(const KvConfig& kv);

// Default output root: $MKG_OUTPUT_DIR or ./out.
std::string default_output_dir();

// Writes manifest.txt (resolved config + command + timestamp + inputs) into
// out_dir, creating it first. Must happen before any other output.
void write_manifest(const std::string& out_dir, const std::string& command, KvConfig resolved);

void write_report(const std::string& out_dir, const MetricsReport& report);
void append_tsv_row(const std::string& path, const std::string& header, const std::string& row);

} // namespace mkgc
