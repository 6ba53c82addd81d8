#include "axspoof/container.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "axspoof/common.hpp"

namespace axspoof::io {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
  public:
    Reader(const std::string& bytes, const std::string& path) : b_(bytes), path_(path) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() {
        const char* p = take(2);
        return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) |
                                          (static_cast<std::uint8_t>(p[1]) << 8));
    }
    std::uint32_t u32() {
        const char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
        return v;
    }
    std::string str(std::size_t n) { return std::string(take(n), n); }
    const char* take(std::size_t n) {
        if (pos_ + n > b_.size()) throw DataError("container truncated: " + path_);
        const char* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == b_.size(); }

  private:
    const std::string& b_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DataError("container: non-positive dimension");
        n *= static_cast<std::size_t>(d);
    }
    return shape.empty() ? 0 : n;
}

}  // namespace

std::size_t Container::Entry::element_count() const { return shape_count(shape); }

void Container::put(const std::string& name, const Tensor& t) {
    Entry e;
    e.dtype = Dtype::f64;
    e.shape = t.shape();
    e.f64.assign(t.data(), t.data() + t.size());
    entries_[name] = std::move(e);
}

void Container::put_f32(const std::string& name, std::vector<int> shape, std::vector<float> data) {
    if (shape_count(shape) != data.size()) throw ShapeError("put_f32: shape/data mismatch");
    Entry e;
    e.dtype = Dtype::f32;
    e.shape = std::move(shape);
    e.f32 = std::move(data);
    entries_[name] = std::move(e);
}

void Container::put_i64(const std::string& name, std::vector<int> shape,
                        std::vector<std::int64_t> data) {
    if (shape_count(shape) != data.size()) throw ShapeError("put_i64: shape/data mismatch");
    Entry e;
    e.dtype = Dtype::i64;
    e.shape = std::move(shape);
    e.i64 = std::move(data);
    entries_[name] = std::move(e);
}

void Container::put_scalar_i64(const std::string& name, std::int64_t v) {
    put_i64(name, {1}, {v});
}

const Container::Entry& Container::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DataError("container: missing entry '" + name + "'");
    return it->second;
}

Tensor Container::tensor(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype == Dtype::f64) return Tensor(e.shape, e.f64);
    if (e.dtype == Dtype::f32) {
        std::vector<double> d(e.f32.begin(), e.f32.end());
        return Tensor(e.shape, std::move(d));
    }
    throw DataError("container: entry '" + name + "' is not floating point");
}

std::int64_t Container::scalar_i64(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != Dtype::i64 || e.i64.size() != 1)
        throw DataError("container: entry '" + name + "' is not a scalar i64");
    return e.i64[0];
}

std::vector<std::string> Container::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

void Container::save(const std::string& path) const {
    std::string out;
    out += "AXSP";
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
        if (name.size() > 0xffff) throw DataError("container: entry name too long");
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(e.dtype));
        out.push_back(static_cast<char>(e.shape.size()));
        for (int d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
        switch (e.dtype) {
            case Dtype::f64:
                for (double v : e.f64) {
                    std::uint64_t bits;
                    std::memcpy(&bits, &v, 8);
                    put_u64(out, bits);
                }
                break;
            case Dtype::f32:
                for (float v : e.f32) {
                    std::uint32_t bits;
                    std::memcpy(&bits, &v, 4);
                    put_u32(out, bits);
                }
                break;
            case Dtype::i64:
                for (std::int64_t v : e.i64) put_u64(out, static_cast<std::uint64_t>(v));
                break;
        }
    }
    atomic_write(path, out);
}

Container Container::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open container: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(bytes, path);
    if (r.str(4) != "AXSP") throw DataError("bad container magic: " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw DataError("unsupported container version " + std::to_string(version) + ": " + path);
    const std::uint32_t count = r.u32();
    Container c;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint8_t dtype = r.u8();
        const std::uint8_t rank = r.u8();
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        const std::size_t n = shape_count(shape);
        Entry e;
        e.shape = std::move(shape);
        switch (dtype) {
            case 0: {
                e.dtype = Dtype::f64;
                e.f64.resize(n);
                for (auto& v : e.f64) {
                    const std::uint64_t bits = r.u64();
                    std::memcpy(&v, &bits, 8);
                }
                break;
            }
            case 1: {
                e.dtype = Dtype::f32;
                e.f32.resize(n);
                for (auto& v : e.f32) {
                    const std::uint32_t bits = r.u32();
                    std::memcpy(&v, &bits, 4);
                }
                break;
            }
            case 2: {
                e.dtype = Dtype::i64;
                e.i64.resize(n);
                for (auto& v : e.i64) v = static_cast<std::int64_t>(r.u64());
                break;
            }
            default:
                throw DataError("container: unknown dtype code " + std::to_string(dtype));
        }
        c.entries_[name] = std::move(e);
    }
    if (!r.done()) throw DataError("container: trailing bytes in " + path);
    return c;
}

bool Container::operator==(const Container& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = o.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
        if (a->first != b->first) return false;
        const Entry& x = a->second;
        const Entry& y = b->second;
        if (x.dtype != y.dtype || x.shape != y.shape) return false;
        if (std::memcmp(x.f64.data(), y.f64.data(), x.f64.size() * 8) != 0) return false;
        if (std::memcmp(x.f32.data(), y.f32.data(), x.f32.size() * 4) != 0) return false;
        if (std::memcmp(x.i64.data(), y.i64.data(), x.i64.size() * 8) != 0) return false;
    }
    return true;
}

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("short write: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot rename " + tmp + " -> " + path);
}

}  // namespace axspoof::io
