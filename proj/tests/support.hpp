#pragma once

// Test-side oracles and generators shared by the unit and acceptance suites.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vinslab/tensor.hpp"

namespace vinslab::testing {

using Gen = std::mt19937_64;

inline int draw_int(Gen& g, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); }
inline double draw_real(Gen& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }

inline Eigen::MatrixXd draw_matrix(Gen& g, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = draw_real(g, lo, hi);
  }
  return m;
}

/// Random architecture with random layer-norm flags; biases and norm
/// parameters are perturbed away from their initial values so every block
/// carries signal.
inline NetworkParams draw_network(Gen& g, int in, int out, int max_hidden = 3, int max_width = 8) {
  std::vector<int> sizes{in};
  const int hidden = draw_int(g, 0, max_hidden);
  for (int i = 0; i < hidden; ++i) sizes.push_back(draw_int(g, 2, max_width));
  sizes.push_back(out);
  std::vector<bool> ln;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) ln.push_back(i + 2 < sizes.size() && draw_int(g, 0, 1) == 1);
  NetworkParams net = init_params(sizes, ln, g());
  for (auto& l : net.layers) {
    l.bias = draw_matrix(g, l.bias.size(), 1, -0.3, 0.3);
    if (l.layer_norm) {
      l.gain = draw_matrix(g, l.gain.size(), 1, 0.5, 1.5);
      l.offset = draw_matrix(g, l.offset.size(), 1, -0.3, 0.3);
    }
  }
  return net;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  int compared = 0;
};

/// Central finite differences of `loss` at every parameter, compared with
/// `analytic` on coordinates whose finite difference exceeds `floor`.
inline GradientCheck check_gradient(const NetworkParams& params, const Gradient& analytic,
                                    const std::function<double(const NetworkParams&)>& loss, double h = 1e-5,
                                    double floor = 1e-8) {
  GradientCheck result;
  NetworkParams probe = params;
  for (std::size_t i = 0; i < probe.layers.size(); ++i) {
    auto& l = probe.layers[i];
    const auto& gl = analytic.layers[i];
    const auto visit = [&](auto& p, const auto& gp) {
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double saved = p.data()[k];
        p.data()[k] = saved + h;
        const double up = loss(probe);
        p.data()[k] = saved - h;
        const double down = loss(probe);
        p.data()[k] = saved;
        const double fd = (up - down) / (2.0 * h);
        if (std::abs(fd) <= floor) continue;
        const double a = gp.data()[k];
        result.max_relative_error =
            std::max(result.max_relative_error, std::abs(a - fd) / std::max(std::abs(a), std::abs(fd)));
        ++result.compared;
      }
    };
    visit(l.weight, gl.weight);
    visit(l.bias, gl.bias);
    if (l.layer_norm) {
      visit(l.gain, gl.gain);
      visit(l.offset, gl.offset);
    }
  }
  return result;
}

/// Breadth-first moves-to-goal on an obstacle-free W x H grid with the four
/// unit moves; indexed [x][y].
inline std::vector<std::vector<int>> bfs_distances(int width, int height, int goal_x, int goal_y) {
  std::vector<std::vector<int>> dist(static_cast<std::size_t>(width), std::vector<int>(static_cast<std::size_t>(height), -1));
  std::deque<std::array<int, 2>> frontier{{goal_x, goal_y}};
  dist[static_cast<std::size_t>(goal_x)][static_cast<std::size_t>(goal_y)] = 0;
  const int dx[] = {1, -1, 0, 0};
  const int dy[] = {0, 0, 1, -1};
  while (!frontier.empty()) {
    const auto [x, y] = frontier.front();
    frontier.pop_front();
    for (int m = 0; m < 4; ++m) {
      const int nx = x + dx[m];
      const int ny = y + dy[m];
      if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
      auto& d = dist[static_cast<std::size_t>(nx)][static_cast<std::size_t>(ny)];
      if (d >= 0) continue;
      d = dist[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] + 1;
      frontier.push_back({nx, ny});
    }
  }
  return dist;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vinslab-" + tag + "-" + std::to_string(std::random_device{}()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace vinslab::testing
