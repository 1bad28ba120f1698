#ifndef DISKILL_SERIALIZATION_HPP
#define DISKILL_SERIALIZATION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "diskill/nn.hpp"

namespace diskill {

/**
 * Flat key -> tensor map with string metadata, stored as UTF-8 text.
 *
 *   diskill-params 1
 *   meta <key> <value to end of line>
 *   tensor <key> <rows> <cols>
 *   <rows lines, each with cols numbers at 17 significant digits>
 *   end <tensor count> <fnv1a-64 of everything above, hex>
 *
 * Keys contain no whitespace. Vectors are stored as (n x 1) tensors.
 * Parsing is all-or-nothing: a truncated or altered file throws CheckpointError.
 */
class ParamStore {
 public:
  void put(const std::string& key, const Mat& value);
  void put_vec(const std::string& key, const Vec& value) { put(key, Mat(value)); }
  void put_scalar(const std::string& key, double value);
  void put_meta(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return tensors_.count(key) != 0; }
  const Mat& get(const std::string& key) const;
  Vec get_vec(const std::string& key) const;
  double get_scalar(const std::string& key) const;
  const std::string& meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }

  const std::map<std::string, Mat>& tensors() const { return tensors_; }

  std::string to_text() const;
  static ParamStore from_text(std::string_view text);

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  std::map<std::string, Mat> tensors_;
  std::map<std::string, std::string> meta_;
};

/// Store a network under `prefix`: layer dims plus one tensor per weight/bias.
void put_net(ParamStore& store, const std::string& prefix, const DenseNet& net);
DenseNet get_net(const ParamStore& store, const std::string& prefix);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);
/// Shortest round-tripping decimal text (17 significant digits).
std::string format_double(double v);

}  // namespace diskill

#endif  // DISKILL_SERIALIZATION_HPP
