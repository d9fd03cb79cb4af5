#include "hart/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hart {

namespace fs = std::filesystem;

namespace {

class DiskSequence final : public Sequence {
 public:
  DiskSequence(std::string dir, std::string seq_id) : dir_(std::move(dir)), id_(std::move(seq_id)) {
    const fs::path boxes_path = fs::path(dir_) / "boxes.csv";
    std::ifstream csv(boxes_path);
    if (!csv) throw std::runtime_error("load_dataset: missing " + boxes_path.string());

    std::string line;
    if (!std::getline(csv, line) || line.rfind("frame,x,y,w,h", 0) != 0) {
      throw std::runtime_error("load_dataset: " + boxes_path.string() +
                               " must start with header frame,x,y,w,h");
    }
    std::size_t row = 1;
    while (std::getline(csv, line)) {
      ++row;
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string field;
      double vals[5];
      for (int i = 0; i < 5; ++i) {
        if (!std::getline(ss, field, i == 4 ? '\n' : ',')) {
          throw std::runtime_error("load_dataset: malformed row " + std::to_string(row) + " in " +
                                   boxes_path.string());
        }
        try {
          vals[i] = std::stod(field);
        } catch (const std::exception&) {
          throw std::runtime_error("load_dataset: malformed row " + std::to_string(row) + " in " +
                                   boxes_path.string());
        }
      }
      if (static_cast<std::size_t>(vals[0]) != boxes_.size() + 1) {
        throw std::runtime_error("load_dataset: non-contiguous frame index at row " +
                                 std::to_string(row) + " in " + boxes_path.string());
      }
      if (vals[3] <= 0.0 || vals[4] <= 0.0) {
        throw std::runtime_error("load_dataset: non-positive box size at row " +
                                 std::to_string(row) + " in " + boxes_path.string());
      }
      boxes_.push_back({vals[1], vals[2], vals[3], vals[4]});
    }
    if (boxes_.size() < 2)
      throw std::runtime_error("load_dataset: sequence " + dir_ + " has fewer than 2 frames");

    // every listed frame must exist, and no extras may be lying around
    frame_paths_.reserve(boxes_.size());
    for (std::size_t t = 0; t < boxes_.size(); ++t) {
      frame_paths_.push_back(frame_path(t));
      if (!fs::exists(frame_paths_[t])) {
        throw std::runtime_error("load_dataset: missing frame file " + frame_paths_[t]);
      }
    }
    std::size_t files = 0;
    const fs::path frames_dir = fs::path(dir_) / "frames";
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
      const std::string ext = entry.path().extension().string();
      if (ext == ".png" || ext == ".ppm") ++files;
    }
    if (files != boxes_.size()) {
      throw std::runtime_error("load_dataset: " + dir_ + " has " + std::to_string(files) +
                               " frame files but " + std::to_string(boxes_.size()) + " box rows");
    }
  }

  std::size_t length() const override { return boxes_.size(); }
  const std::vector<BoundingBox>& boxes() const override { return boxes_; }
  Tensor frame(std::size_t t) const override { return image_to_tensor(read_image(frame_paths_.at(t))); }
  const std::string& id() const override { return id_; }

 private:
  std::string frame_path(std::size_t t) const {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu", t + 1);
    const fs::path base = fs::path(dir_) / "frames" / name;
    const std::string png = base.string() + ".png";
    if (fs::exists(png)) return png;
    return base.string() + ".ppm";
  }

  std::string dir_;
  std::string id_;
  std::vector<BoundingBox> boxes_;
  std::vector<std::string> frame_paths_;
};

}  // namespace

SequencePtr load_sequence_dir(const std::string& dir) {
  return std::make_shared<DiskSequence>(dir, fs::path(dir).filename().string());
}

std::vector<SequencePtr> load_dataset(const std::string& manifest_path) {
  std::ifstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("load_dataset: cannot open manifest " + manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  std::vector<SequencePtr> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    const fs::path dir = root / line;
    out.push_back(std::make_shared<DiskSequence>(dir.string(), line));
  }
  if (out.empty()) throw std::runtime_error("load_dataset: manifest " + manifest_path + " lists no sequences");
  return out;
}

}  // namespace hart
