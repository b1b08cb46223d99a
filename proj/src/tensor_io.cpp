#include "vinslab/tensor_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "vinslab/text.hpp"

namespace vinslab {

namespace {

constexpr std::string_view kMagic = "vinslab-net";

void write_row(std::ostream& out, const auto& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << text::format_real(values(i));
  }
  out << '\n';
}

std::string_view header_field(const std::vector<std::string_view>& tokens, std::string_view key, long line) {
  for (auto t : tokens) {
    if (t.size() > key.size() && t.substr(0, key.size()) == key && t[key.size()] == '=') {
      return t.substr(key.size() + 1);
    }
  }
  throw ParseError("checkpoint header is missing '" + std::string(key) + "'", line);
}

struct RowReader {
  std::istream& in;
  long line = 1;

  VectorX<double> next(Eigen::Index expected) {
    std::string s;
    if (!std::getline(in, s)) throw ParseError("unexpected end of checkpoint", line + 1);
    ++line;
    const auto fields = text::split(s, ',');
    if (static_cast<Eigen::Index>(fields.size()) != expected) {
      throw ParseError("expected " + std::to_string(expected) + " values, found " +
                           std::to_string(fields.size()),
                       line);
    }
    VectorX<double> v(expected);
    for (Eigen::Index i = 0; i < expected; ++i) v(i) = text::parse_real(fields[i], line);
    return v;
  }
};

}  // namespace

void save_network(const NetworkParams& net, std::ostream& out) {
  validate(net);
  out << kMagic << " sizes=" << net.in_dim();
  for (const auto& l : net.layers) out << ',' << l.out_dim();
  out << " layernorm=";
  for (std::size_t i = 0; i < net.layers.size(); ++i) out << (i ? "," : "") << (net.layers[i].layer_norm ? 1 : 0);
  out << " activation=";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    out << (i ? "," : "") << (net.layers[i].activation == Activation::relu ? "relu" : "identity");
  }
  out << '\n';
  for (const auto& l : net.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) write_row(out, l.weight.row(r));
    write_row(out, l.bias);
    if (l.layer_norm) {
      write_row(out, l.gain);
      write_row(out, l.offset);
    }
  }
}

void save_network(const NetworkParams& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  save_network(net, out);
}

NetworkParams load_network(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty checkpoint", 1);
  const auto tokens = text::split(header, ' ');
  if (tokens.empty() || tokens.front() != kMagic) throw ParseError("not a network checkpoint", 1);

  std::vector<int> sizes;
  for (auto s : text::split(header_field(tokens, "sizes", 1), ',')) {
    sizes.push_back(static_cast<int>(text::parse_integer(s, 1)));
  }
  const auto ln = text::split(header_field(tokens, "layernorm", 1), ',');
  const auto act = text::split(header_field(tokens, "activation", 1), ',');
  if (sizes.size() < 2) throw ParseError("need at least two layer sizes", 1);
  const std::size_t n_layers = sizes.size() - 1;
  if (ln.size() != n_layers || act.size() != n_layers) {
    throw ParseError("layer flag count does not match layer sizes", 1);
  }

  NetworkParams net;
  net.layers.resize(n_layers);
  RowReader rows{in};
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto& l = net.layers[i];
    if (sizes[i] <= 0 || sizes[i + 1] <= 0) throw ParseError("layer sizes must be positive", 1);
    if (act[i] == "relu") {
      l.activation = Activation::relu;
    } else if (act[i] == "identity") {
      l.activation = Activation::identity;
    } else {
      throw ParseError("unknown activation '" + std::string(act[i]) + "'", 1);
    }
    if (ln[i] != "0" && ln[i] != "1") throw ParseError("layer-norm flags must be 0 or 1", 1);
    l.layer_norm = ln[i] == "1";
    l.weight.resize(sizes[i + 1], sizes[i]);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight.row(r) = rows.next(sizes[i]).transpose();
    l.bias = rows.next(sizes[i + 1]);
    if (l.layer_norm) {
      l.gain = rows.next(sizes[i + 1]);
      l.offset = rows.next(sizes[i + 1]);
    }
  }
  return net;
}

NetworkParams load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing checkpoint: " + path.string());
  return load_network(in);
}

void write_manifest(const std::string& kind, const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "vinslab-" << kind << '\n';
  for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
}

Manifest read_manifest(const std::string& kind, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "vinslab-" + kind) {
    throw SchemaError(path.string() + " is not a " + kind + " manifest");
  }
  Manifest m;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value in " + path.string(), line_no);
    m[std::string(text::trim(std::string_view(line).substr(0, eq)))] =
        std::string(text::trim(std::string_view(line).substr(eq + 1)));
  }
  return m;
}

double manifest_real(const Manifest& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw SchemaError("manifest lacks " + key);
  return text::parse_real(it->second, 0);
}

}  // namespace vinslab
