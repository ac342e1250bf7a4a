#pragma once

// Shared fixtures: toy models, Eigen views and scratch directories.

#include <Eigen/Dense>
#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

#include "adelta/model.hpp"
#include "adelta/prompt.hpp"
#include "adelta/toy_models.hpp"

namespace testing {

inline std::shared_ptr<const adelta::ToyTextEncoder> toy_encoder(bool aggregate = true) {
  adelta::ToyEncoderOptions o;
  o.aggregate = aggregate;
  o.id = aggregate ? "toy-aggregating" : "toy-whitespace";
  return std::make_shared<adelta::ToyTextEncoder>(o);
}

inline std::shared_ptr<const adelta::ToyLinearBackbone> toy_backbone(
    adelta::ImageShape shape = {2, 4, 1}) {
  adelta::ToyBackboneOptions o;
  o.image_shape = shape;
  return std::make_shared<adelta::ToyLinearBackbone>(o);
}

inline Eigen::MatrixXd to_eigen(const adelta::Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

template <class Range>
Eigen::VectorXd to_eigen_vec(const Range& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (auto x : v) out(i++) = static_cast<double>(x);
  return out;
}

// Mean of the non-special rows, computed independently of the library.
inline Eigen::VectorXd content_mean_ref(const adelta::TokenizedPrompt& tp) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tp.embeddings.cols()));
  int n = 0;
  for (std::size_t r = 0; r < tp.size(); ++r) {
    if (tp.tokens[r].special) continue;
    for (std::size_t c = 0; c < tp.embeddings.cols(); ++c) m(static_cast<Eigen::Index>(c)) += tp.embeddings(r, c);
    ++n;
  }
  return n ? Eigen::VectorXd(m / n) : m;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

// Removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("adelta-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
