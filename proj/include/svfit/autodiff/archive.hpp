#pragma once

// Named-tensor container.
//
// Layout (all integers little-endian):
//   magic "SVTA" | u32 version (1) | u32 entry count
//   per entry: u32 name length | name bytes | u8 dtype (0 f32, 1 f64, 2 u8)
//              | 4 x u32 extents (N, C, H, W) | u64 byte count | raw data
// Entries are stored in insertion order; names are unique.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/autodiff/tensor.hpp"

namespace svfit::ad {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

inline std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
    }
    throw std::runtime_error("unknown dtype");
}

struct ArchiveEntry {
    DType dtype = DType::f32;
    Shape shape;
    std::vector<char> bytes;
};

class Archive {
public:
    template <typename T>
    void put(const std::string& name, const Tensor<T>& t) {
        put_values<T>(name, t.shape(), std::span<const T>(t.data()));
    }

    template <typename T>
    void put_values(const std::string& name, Shape shape, std::span<const T> values) {
        static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
        ArchiveEntry e;
        e.dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;
        e.shape = shape;
        e.bytes.resize(values.size() * sizeof(T));
        std::memcpy(e.bytes.data(), values.data(), e.bytes.size());
        insert(name, std::move(e));
    }

    void put_bytes(const std::string& name, const std::string& blob) {
        ArchiveEntry e;
        e.dtype = DType::u8;
        e.shape = {1, 1, 1, static_cast<int>(blob.size())};
        e.bytes.assign(blob.begin(), blob.end());
        insert(name, std::move(e));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const ArchiveEntry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::runtime_error("archive: missing entry '" + name + "'");
        return entries_[it->second].second;
    }

    /// Values converted to T.
    template <typename T>
    std::vector<T> values(const std::string& name) const {
        const ArchiveEntry& e = entry(name);
        std::vector<T> out(e.shape.size());
        if (e.dtype == DType::f32) {
            std::vector<float> tmp(out.size());
            std::memcpy(tmp.data(), e.bytes.data(), e.bytes.size());
            std::copy(tmp.begin(), tmp.end(), out.begin());
        } else if (e.dtype == DType::f64) {
            std::vector<double> tmp(out.size());
            std::memcpy(tmp.data(), e.bytes.data(), e.bytes.size());
            std::copy(tmp.begin(), tmp.end(), out.begin());
        } else {
            throw std::runtime_error("archive: entry '" + name + "' is not floating point");
        }
        return out;
    }

    template <typename T>
    Tensor<T> tensor(const std::string& name, bool requires_grad = false) const {
        return Tensor<T>::from(entry(name).shape, values<T>(name), requires_grad);
    }

    /// Copies values into an existing tensor, checking the shape.
    template <typename T>
    void load_into(const std::string& name, Tensor<T>& t) const {
        const ArchiveEntry& e = entry(name);
        if (!(e.shape == t.shape()))
            throw ShapeError("archive: entry '" + name + "' has shape " + e.shape.str() + ", expected " +
                             t.shape().str());
        auto v = values<T>(name);
        std::copy(v.begin(), v.end(), t.mutable_data().begin());
    }

    std::string bytes(const std::string& name) const {
        const ArchiveEntry& e = entry(name);
        return std::string(e.bytes.begin(), e.bytes.end());
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [n, _] : entries_) out.push_back(n);
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("archive: cannot write " + path);
        os.write("SVTA", 4);
        write_u32(os, 1);
        write_u32(os, static_cast<std::uint32_t>(entries_.size()));
        for (const auto& [name, e] : entries_) {
            write_u32(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            auto dt = static_cast<std::uint8_t>(e.dtype);
            os.write(reinterpret_cast<const char*>(&dt), 1);
            for (int ext : {e.shape.n, e.shape.c, e.shape.h, e.shape.w}) write_u32(os, static_cast<std::uint32_t>(ext));
            std::uint64_t len = e.bytes.size();
            os.write(reinterpret_cast<const char*>(&len), 8);
            os.write(e.bytes.data(), static_cast<std::streamsize>(len));
        }
        if (!os) throw std::runtime_error("archive: write failed for " + path);
    }

    static Archive load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("archive: cannot open " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "SVTA", 4) != 0) throw std::runtime_error("archive: bad magic in " + path);
        if (read_u32(is) != 1) throw std::runtime_error("archive: unsupported version in " + path);
        std::uint32_t count = read_u32(is);
        Archive a;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name(read_u32(is), '\0');
            is.read(name.data(), static_cast<std::streamsize>(name.size()));
            std::uint8_t dt = 0;
            is.read(reinterpret_cast<char*>(&dt), 1);
            if (dt > 2) throw std::runtime_error("archive: bad dtype for '" + name + "'");
            ArchiveEntry e;
            e.dtype = static_cast<DType>(dt);
            e.shape.n = static_cast<int>(read_u32(is));
            e.shape.c = static_cast<int>(read_u32(is));
            e.shape.h = static_cast<int>(read_u32(is));
            e.shape.w = static_cast<int>(read_u32(is));
            std::uint64_t len = 0;
            is.read(reinterpret_cast<char*>(&len), 8);
            if (!is || len != e.shape.size() * dtype_size(e.dtype))
                throw std::runtime_error("archive: corrupt entry '" + name + "' in " + path);
            e.bytes.resize(len);
            is.read(e.bytes.data(), static_cast<std::streamsize>(len));
            if (!is) throw std::runtime_error("archive: truncated file " + path);
            a.insert(name, std::move(e));
        }
        return a;
    }

private:
    void insert(const std::string& name, ArchiveEntry e) {
        auto it = index_.find(name);
        if (it != index_.end()) {
            entries_[it->second].second = std::move(e);
            return;
        }
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(e));
    }

    static void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
    static std::uint32_t read_u32(std::istream& is) {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        if (!is) throw std::runtime_error("archive: truncated header");
        return v;
    }

    std::vector<std::pair<std::string, ArchiveEntry>> entries_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace svfit::ad
