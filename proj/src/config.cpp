#include "squeezelab/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>

namespace squeezelab {

namespace {

std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& text)
{
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw ConfigError("key '" + key + "': not a number: " + text);
    return v;
}

}  // namespace

Config Config::parse(std::istream& in, const std::string& source)
{
    Config cfg;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.find('=') == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
        }
        cfg.set(line);
    }
    return cfg;
}

Config Config::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in, path);
}

void Config::set(const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value)
{
    if (key.empty()) throw ConfigError("empty key");
    values_[key] = value;
}

bool Config::has(const std::string& key) const
{
    return values_.count(key) != 0;
}

std::optional<std::string> Config::lookup(const std::string& key) const
{
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    return lookup(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const
{
    const auto v = lookup(key);
    return v ? parse_double(key, *v) : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const
{
    const auto v = lookup(key);
    if (!v) return fallback;
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("key '" + key + "': not an integer: " + *v);
    }
    return out;
}

std::uint64_t Config::get_uint64(const std::string& key) const
{
    const auto v = lookup(key);
    if (!v) throw ConfigError("missing required key '" + key + "'");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("key '" + key + "': not an unsigned 64-bit integer: " + *v);
    }
    return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const
{
    const auto v = lookup(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("key '" + key + "': not a boolean: " + *v);
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& fallback) const
{
    const auto v = lookup(key);
    if (!v) return fallback;
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= v->size()) {
        const auto comma = v->find(',', start);
        const std::string item = trim(v->substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (item.empty()) throw ConfigError("key '" + key + "': empty list element");
        out.push_back(parse_double(key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<std::string> Config::unused_keys() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (!used_.count(k)) out.push_back(k);
    }
    return out;
}

std::string Config::hash(const std::set<std::string>& ignored) const
{
    std::string canonical;
    for (const auto& [k, v] : values_) {
        if (ignored.count(k)) continue;
        canonical += k + "=" + v + "\n";
    }
    return fnv1a_hex(canonical);
}

std::string fnv1a_hex(const std::string& data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace squeezelab
