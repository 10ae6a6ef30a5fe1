#pragma once

// Training-set directory: one bundle subdirectory per sample plus index.txt,
// whose lines are "<subdir> <family>".

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "svfit/io/bundle.hpp"
#include "svfit/procedural.hpp"

namespace svfit::io {

inline void save_dataset(const std::vector<ProceduralSample>& data, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir + "/index.txt");
    if (!index) throw std::runtime_error("cannot write " + dir + "/index.txt");
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%05zu", i);
        save_bundle(data[i].maps, dir + "/" + name);
        index << name << " " << family_name(data[i].family) << "\n";
    }
}

/// Loads every bundle subdirectory in name order. Families come from
/// index.txt when present; unlisted samples are tagged as tiles.
inline std::vector<ProceduralSample> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
    std::map<std::string, Family> families;
    std::ifstream index(dir + "/index.txt");
    std::string name, fam;
    while (index >> name >> fam)
        for (Family f : {Family::tiles, Family::stripes, Family::blobs, Family::speckle})
            if (fam == family_name(f)) families[name] = f;
    std::vector<std::string> subdirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) subdirs.push_back(e.path().filename().string());
    std::sort(subdirs.begin(), subdirs.end());
    std::vector<ProceduralSample> out;
    for (const auto& s : subdirs) {
        auto it = families.find(s);
        out.push_back({it == families.end() ? Family::tiles : it->second, load_bundle<float>(dir + "/" + s)});
    }
    if (out.empty()) throw std::runtime_error("dataset " + dir + " holds no samples");
    return out;
}

}  // namespace svfit::io
