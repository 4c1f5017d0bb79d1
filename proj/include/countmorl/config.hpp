#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "countmorl/common.hpp"

namespace countmorl {

/// Plain-text configuration: '[section]' headers and 'key = value' lines,
/// '#' or ';' comments. Keys are addressed as "section.key".
class ConfigFile {
  public:
    ConfigFile() = default;

    static ConfigFile parse(const std::string& text, const std::string& origin = "<config>") {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string where = origin + ":" + std::to_string(line_no);
            std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']') throw std::runtime_error(where + ": unterminated section");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty()) throw std::runtime_error(where + ": empty section name");
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(where + ": expected 'key = value', got '" + trimmed + "'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw std::runtime_error(where + ": empty key");
            const std::string full = section.empty() ? key : section + "." + key;
            cfg.values_[full] = value;
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        return parse(buf.str(), path);
    }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto v = get(key);
        return v ? *v : fallback;
    }

    double get_double(const std::string& key, double fallback) const {
        auto v = get(key);
        return v ? parse_double(*v, "config key '" + key + "'") : fallback;
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto v = get(key);
        return v ? parse_int(*v, "config key '" + key + "'") : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw std::runtime_error("config key '" + key + "': expected a boolean, got '" + *v + "'");
    }

    /// Comma-separated list values.
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(*v);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Canonical sorted key=value rendering; hashing this pins the resolved
    /// configuration regardless of file formatting.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

    /// Hash over experimental inputs. The output directory is provenance of
    /// the invocation, not of the experiment, so it is excluded.
    std::uint64_t hash() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            if (k == "experiment.out_dir") continue;
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return fnv1a64(out);
    }

  private:
    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace countmorl
