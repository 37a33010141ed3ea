#include "gcnet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (cfg.kv_.count(key))
            throw ParseError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        cfg.kv_[key] = value;
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string Config::raw(const std::string& key, const std::string& def, bool required) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
        if (required) throw ConfigError(origin_ + ": missing required key '" + key + "'");
        resolved_[key] = def;
        return def;
    }
    resolved_[key] = it->second;
    return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& def) { return raw(key, def, false); }

std::string Config::require_str(const std::string& key) { return raw(key, "", true); }

int Config::get_int(const std::string& key, int def) {
    const std::string v = raw(key, std::to_string(def), false);
    char* end = nullptr;
    const long long n = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') throw ConfigError("key '" + key + "' is not an integer: " + v);
    return static_cast<int>(n);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) {
    const std::string v = raw(key, std::to_string(def), false);
    char* end = nullptr;
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') throw ConfigError("key '" + key + "' is not an unsigned integer: " + v);
    return n;
}

double Config::get_double(const std::string& key, double def) {
    std::ostringstream d;
    d << def;
    const std::string v = raw(key, d.str(), false);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') throw ConfigError("key '" + key + "' is not a number: " + v);
    return x;
}

bool Config::get_bool(const std::string& key, bool def) {
    const std::string v = raw(key, def ? "true" : "false", false);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "' is not a boolean: " + v);
}

std::vector<std::string> Config::get_list(const std::string& key, const std::string& def) {
    const std::string v = raw(key, def, false);
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string item = trim(v.substr(start, comma == std::string::npos ? comma : comma - start));
        if (!item.empty()) items.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

void Config::reject_unknown() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : kv_)
        if (!consumed_.count(key)) unknown.push_back(key);
    if (unknown.empty()) return;
    std::string msg = "unknown config key";
    if (unknown.size() > 1) msg += "s";
    msg += ":";
    for (const std::string& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
}

std::string Config::resolved() const {
    std::string out;
    for (const auto& [key, value] : resolved_) out += key + " = " + value + "\n";
    return out;
}

std::uint64_t Config::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over "key=value\n" in map order
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [key, value] : kv_) {
        mix(key);
        mix("=");
        mix(value);
        mix("\n");
    }
    return h;
}

}  // namespace gcnet
