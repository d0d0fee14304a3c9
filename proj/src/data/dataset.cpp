#include "pseg/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "pseg/data/image_io.hpp"
#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"

namespace fs = std::filesystem;

namespace pseg::data {

std::string_view cohort_name(Cohort c) {
  switch (c) {
    case Cohort::Primary: return "primary";
    case Cohort::Metastatic: return "metastatic";
    case Cohort::Synthetic: return "synthetic";
  }
  return "primary";
}

Cohort parse_cohort(std::string_view name) {
  if (name == "primary") return Cohort::Primary;
  if (name == "metastatic") return Cohort::Metastatic;
  if (name == "synthetic") return Cohort::Synthetic;
  throw std::invalid_argument("unknown cohort '" + std::string(name) + "'");
}

void Sample::validate() const {
  mask.validate();
  if (!image.defined() || image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("sample " + id + ": image must be 3×H×W");
  }
  if (image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("sample " + id + ": image " + diff::to_string(image.shape()) + " and mask " +
                     std::to_string(mask.height) + "x" + std::to_string(mask.width) + " differ");
  }
}

std::vector<std::string> list_png_ids(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

std::map<std::string, Cohort> read_cohorts(const fs::path& file) {
  std::map<std::string, Cohort> out;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument(file.string() + ":" + std::to_string(lineno) + ": expected id,cohort");
    }
    const std::string id = trim(line.substr(0, comma));
    const std::string cohort = trim(line.substr(comma + 1));
    if (lineno == 1 && id == "id" && cohort == "cohort") continue;
    out[id] = parse_cohort(cohort);
  }
  return out;
}

}  // namespace

std::vector<Sample> load_dataset(const fs::path& root) {
  const auto ids = list_png_ids(root / "images");
  std::map<std::string, Cohort> cohorts;
  if (fs::exists(root / "cohorts.csv")) cohorts = read_cohorts(root / "cohorts.csv");

  std::vector<Sample> samples;
  samples.reserve(ids.size());
  for (const auto& id : ids) {
    const fs::path mask_path = root / "masks" / (id + ".png");
    if (!fs::exists(mask_path)) throw IoError("image " + id + " has no mask at " + mask_path.string());
    Sample s;
    s.id = id;
    s.image = to_tensor(read_png_rgb(root / "images" / (id + ".png")));
    s.mask = read_png_mask(mask_path);
    if (auto it = cohorts.find(id); it != cohorts.end()) s.cohort = it->second;
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_dataset(const fs::path& root, const std::vector<Sample>& samples) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ofstream csv(root / "cohorts.csv");
  if (!csv) throw IoError("cannot write " + (root / "cohorts.csv").string());
  csv << "id,cohort\n";
  for (const auto& s : samples) {
    s.validate();
    write_png_rgb(root / "images" / (s.id + ".png"), to_rgb(s.image));
    write_png_mask(root / "masks" / (s.id + ".png"), s.mask);
    csv << s.id << ',' << cohort_name(s.cohort) << '\n';
  }
}

TissueMask resize_nearest(const TissueMask& mask, std::size_t out_h, std::size_t out_w) {
  TissueMask out = TissueMask::filled(out_h, out_w);
  // Source index floor((dst + 0.5) * in / out), the pixel whose extent holds the
  // destination centre. Integer arithmetic keeps it exact.
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = std::min(mask.height - 1, ((2 * y + 1) * mask.height) / (2 * out_h));
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = std::min(mask.width - 1, ((2 * x + 1) * mask.width) / (2 * out_w));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

Sample resize_pair(const Sample& sample, std::size_t out) {
  sample.validate();
  if (sample.height() != sample.width()) {
    throw ShapeError("resize_pair: sample " + sample.id + " is " + std::to_string(sample.height()) + "x" +
                     std::to_string(sample.width()) + ", expected a square image");
  }
  if (out == 0) throw ShapeError("resize_pair: output size must be positive");
  Sample r;
  r.id = sample.id;
  r.cohort = sample.cohort;
  r.image = sample.height() == out ? sample.image.detach() : diff::bilinear_resize(sample.image, out, out);
  r.mask = resize_nearest(sample.mask, out, out);
  return r;
}

}  // namespace pseg::data
