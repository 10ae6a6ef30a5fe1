#pragma once

// Ordered key=value record written next to every CLI artifact.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace svfit {

class RunManifest {
public:
    template <typename V>
    void set(const std::string& key, const V& value) {
        std::ostringstream os;
        os.precision(17);
        os << value;
        set_text(key, os.str());
    }

    void set_text(const std::string& key, const std::string& value) {
        if (key.empty() || key.find_first_of("=\n") != std::string::npos)
            throw std::invalid_argument("RunManifest: bad key '" + key + "'");
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = value;
                return;
            }
        entries_.emplace_back(key, value);
    }

    bool contains(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return true;
        return false;
    }

    const std::string& get(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return e.second;
        throw std::out_of_range("RunManifest: no key '" + key + "'");
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string to_text() const {
        std::string s;
        for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
        return s;
    }

    static RunManifest from_text(const std::string& text) {
        RunManifest m;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error("RunManifest: malformed line '" + line + "'");
            m.set_text(line.substr(0, eq), line.substr(eq + 1));
        }
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write " + path);
        os << to_text();
    }

    static RunManifest load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot read " + path);
        std::stringstream ss;
        ss << is.rdbuf();
        return from_text(ss.str());
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace svfit
