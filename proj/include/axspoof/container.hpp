#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "axspoof/tensor.hpp"

namespace axspoof::io {

// Named-tensor binary container. Layout:
//   magic "AXSP", version u32, entry count u32, then per entry:
//   name length u16, UTF-8 name, dtype u8 (0=f64, 1=f32, 2=i64),
//   rank u8, dims as u32, raw little-endian payload.
// Entries are written in name order, so identical contents produce
// byte-identical files.
class Container {
  public:
    enum class Dtype : std::uint8_t { f64 = 0, f32 = 1, i64 = 2 };

    struct Entry {
        Dtype dtype = Dtype::f64;
        std::vector<int> shape;
        std::vector<double> f64;
        std::vector<float> f32;
        std::vector<std::int64_t> i64;
        std::size_t element_count() const;
    };

    static constexpr std::uint32_t kVersion = 1;

    void put(const std::string& name, const Tensor& t);
    void put_f32(const std::string& name, std::vector<int> shape, std::vector<float> data);
    void put_i64(const std::string& name, std::vector<int> shape, std::vector<std::int64_t> data);
    void put_scalar_i64(const std::string& name, std::int64_t v);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const Entry& entry(const std::string& name) const;
    // f64 entries load directly; f32 entries are widened.
    Tensor tensor(const std::string& name) const;
    std::int64_t scalar_i64(const std::string& name) const;

    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }

    void save(const std::string& path) const;  // write-temp-then-rename
    static Container load(const std::string& path);

    bool operator==(const Container& o) const;

  private:
    std::map<std::string, Entry> entries_;
};

// Writes bytes to path atomically (temp file in the same directory, then rename).
void atomic_write(const std::string& path, const std::string& bytes);

}  // namespace axspoof::io
