// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "alc/data_model.hpp"

namespace fx {

inline alc::Label lab(double x, double y, double w, double h, alc::LabelId id,
                      alc::Source src = alc::Source::Crowd, double conf = 1.0, alc::ImageId img = 1) {
  return {alc::Box(x, y, w, h), img, 1, src, conf, id, {}};
}

inline alc::AnnotationSet images(alc::Source src, int n, alc::ImageId first = 1) {
  alc::AnnotationSet s(src);
  for (int i = 0; i < n; ++i) s.add_image({first + i, "img_" + std::to_string(first + i) + ".png", 256, 256});
  return s;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "alc") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace fx
