#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace gcnet {

// key = value lines, '#' starts a comment, blank lines ignored. Duplicate
// keys in one file are an error; set() (flag overrides) replaces. Getters
// mark keys consumed and record the effective value, so reject_unknown()
// can list every key no handler asked for and resolved() can log the full
// effective configuration including defaults.
class Config {
public:
    Config() = default;
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text, const std::string& origin = "<config>");

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& def);
    std::string require_str(const std::string& key);
    int get_int(const std::string& key, int def);
    std::uint64_t get_u64(const std::string& key, std::uint64_t def);
    double get_double(const std::string& key, double def);
    bool get_bool(const std::string& key, bool def);
    // Comma-separated list; whitespace around items is trimmed.
    std::vector<std::string> get_list(const std::string& key, const std::string& def);

    // Throws ConfigError naming every present-but-unconsumed key.
    void reject_unknown() const;
    // Sorted "key = value" lines of every consumed key with effective values.
    std::string resolved() const;
    // Order-independent hash of the raw key/value pairs; names run dirs.
    std::uint64_t content_hash() const;

private:
    std::string raw(const std::string& key, const std::string& def, bool required);

    std::map<std::string, std::string> kv_;
    std::set<std::string> consumed_;
    std::map<std::string, std::string> resolved_;
    std::string origin_ = "<config>";
};

}  // namespace gcnet
