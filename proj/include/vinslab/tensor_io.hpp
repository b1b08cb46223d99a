#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vinslab/tensor.hpp"

namespace vinslab {

// Checkpoint layout:
//   vinslab-net sizes=3,64,1 layernorm=1,0 activation=relu,identity
// followed, per layer, by the weight rows (row-major), the bias row and, for
// layer-norm layers, the gain and offset rows. Reals use 17 significant digits.
void save_network(const NetworkParams& net, std::ostream& out);
void save_network(const NetworkParams& net, const std::filesystem::path& path);
NetworkParams load_network(std::istream& in);
NetworkParams load_network(const std::filesystem::path& path);

/// Checkpoint sidecar: a first line naming the kind, then `key = value` lines.
using Manifest = std::map<std::string, std::string>;
void write_manifest(const std::string& kind, const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::filesystem::path& path);
/// Throws DependencyError when the file is missing and SchemaError when its
/// kind differs or a line is malformed.
Manifest read_manifest(const std::string& kind, const std::filesystem::path& path);
double manifest_real(const Manifest& m, const std::string& key);

}  // namespace vinslab
