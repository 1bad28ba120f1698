#include "diskill/serialization.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "diskill/errors.hpp"

namespace diskill {
namespace {

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char ch : key) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') return false;
  }
  return true;
}

double parse_double(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE)
    throw CheckpointError("malformed number '" + token + "'");
  return v;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ParamStore::put(const std::string& key, const Mat& value) {
  if (!valid_key(key)) throw CheckpointError("invalid tensor key '" + key + "'");
  tensors_[key] = value;
}

void ParamStore::put_scalar(const std::string& key, double value) {
  put(key, Mat::Constant(1, 1, value));
}

void ParamStore::put_meta(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw CheckpointError("invalid meta key '" + key + "'");
  if (value.find('\n') != std::string::npos) throw CheckpointError("meta value contains newline");
  meta_[key] = value;
}

const Mat& ParamStore::get(const std::string& key) const {
  auto it = tensors_.find(key);
  if (it == tensors_.end()) throw CheckpointError("missing tensor '" + key + "'");
  return it->second;
}

Vec ParamStore::get_vec(const std::string& key) const {
  const Mat& m = get(key);
  if (m.cols() != 1) throw CheckpointError("tensor '" + key + "' is not a vector");
  return m.col(0);
}

double ParamStore::get_scalar(const std::string& key) const {
  const Mat& m = get(key);
  if (m.size() != 1) throw CheckpointError("tensor '" + key + "' is not a scalar");
  return m(0, 0);
}

const std::string& ParamStore::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw CheckpointError("missing meta '" + key + "'");
  return it->second;
}

std::string ParamStore::to_text() const {
  std::string body = "diskill-params 1\n";
  for (const auto& [k, v] : meta_) body += "meta " + k + " " + v + "\n";
  for (const auto& [k, m] : tensors_) {
    body += "tensor " + k + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j > 0) body += ' ';
        body += format_double(m(i, j));
      }
      body += '\n';
    }
  }
  body += "end " + std::to_string(tensors_.size()) + " " + hex64(fnv1a64(body)) + "\n";
  return body;
}

ParamStore ParamStore::from_text(std::string_view text) {
  const auto end_pos = text.rfind("\nend ");
  if (end_pos == std::string_view::npos) throw CheckpointError("checkpoint truncated: no end marker");
  const std::string_view body = text.substr(0, end_pos + 1);
  std::istringstream tail{std::string(text.substr(end_pos + 1))};
  std::string tag, checksum;
  std::size_t count = 0;
  if (!(tail >> tag >> count >> checksum) || tag != "end")
    throw CheckpointError("checkpoint end marker malformed");
  if (checksum != hex64(fnv1a64(body))) throw CheckpointError("checkpoint checksum mismatch");

  ParamStore store;
  std::istringstream in{std::string(body)};
  std::string line;
  if (!std::getline(in, line) || line != "diskill-params 1")
    throw CheckpointError("not a diskill parameter file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, key;
    ls >> kind >> key;
    if (kind == "meta") {
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      store.meta_[key] = value;
    } else if (kind == "tensor") {
      long rows = -1, cols = -1;
      if (!(ls >> rows >> cols) || rows < 0 || cols < 0)
        throw CheckpointError("bad tensor header for '" + key + "'");
      Mat m(rows, cols);
      for (long i = 0; i < rows; ++i) {
        std::string row;
        if (!std::getline(in, row)) throw CheckpointError("tensor '" + key + "' truncated");
        std::istringstream rs(row);
        std::string tok;
        for (long j = 0; j < cols; ++j) {
          if (!(rs >> tok)) throw CheckpointError("tensor '" + key + "' row too short");
          m(i, j) = parse_double(tok);
        }
        if (rs >> tok) throw CheckpointError("tensor '" + key + "' row too long");
      }
      store.tensors_[key] = std::move(m);
    } else {
      throw CheckpointError("unknown record '" + kind + "'");
    }
  }
  if (store.tensors_.size() != count) throw CheckpointError("tensor count mismatch");
  return store;
}

void ParamStore::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out << to_text();
    if (!out) throw CheckpointError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("cannot move checkpoint into place at '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void put_net(ParamStore& store, const std::string& prefix, const DenseNet& net) {
  Vec dims(static_cast<Eigen::Index>(net.layer_dims().size()));
  for (std::size_t i = 0; i < net.layer_dims().size(); ++i)
    dims[static_cast<Eigen::Index>(i)] = net.layer_dims()[i];
  store.put_vec(prefix + ".dims", dims);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    store.put(prefix + ".w" + std::to_string(i), net.layer(i).weight);
    store.put_vec(prefix + ".b" + std::to_string(i), net.layer(i).bias);
  }
}

DenseNet get_net(const ParamStore& store, const std::string& prefix) {
  const Vec dims = store.get_vec(prefix + ".dims");
  std::vector<int> layer_dims;
  for (Eigen::Index i = 0; i < dims.size(); ++i) {
    const double d = dims[i];
    if (d < 1 || d != static_cast<double>(static_cast<int>(d)))
      throw CheckpointError("bad layer dims for '" + prefix + "'");
    layer_dims.push_back(static_cast<int>(d));
  }
  if (layer_dims.size() < 2) throw CheckpointError("bad layer dims for '" + prefix + "'");
  DenseNet net(layer_dims);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Mat& w = store.get(prefix + ".w" + std::to_string(i));
    const Vec b = store.get_vec(prefix + ".b" + std::to_string(i));
    if (w.rows() != net.layer(i).weight.rows() || w.cols() != net.layer(i).weight.cols() ||
        b.size() != net.layer(i).bias.size())
      throw CheckpointError("shape mismatch in '" + prefix + "' layer " + std::to_string(i));
    net.layer(i).weight = w;
    net.layer(i).bias = b;
  }
  return net;
}

}  // namespace diskill
