#include "freqsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "freqsr/data.hpp"
#include "freqsr/errors.hpp"
#include "freqsr/image.hpp"
#include "freqsr/training.hpp"

namespace freqsr {
namespace fs = std::filesystem;

namespace {

torch::Tensor as_plane(const torch::Tensor& x, const char* what) {
  if (x.dim() == 2) return x.to(torch::kFloat64);
  if (x.dim() == 3 && x.size(0) == 1) return x[0].to(torch::kFloat64);
  throw DimensionError(std::string(what) + ": expected an [H, W] or [1, H, W] plane");
}

torch::Tensor gaussian_window(int size, double sigma) {
  auto g = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  g = torch::exp(-g.pow(2) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g).reshape({1, 1, size, size});
}

/// Greedy pipeline pass on one [H, W] luminance plane, H and W multiples of 8.
torch::Tensor run_luma(FreqSR& model, const torch::Tensor& luma, double r) {
  torch::NoGradGuard no_grad;
  const auto dtype = model->cdct_filters.scalar_type();
  std::mt19937_64 unused(0);
  const auto x = luma.to(dtype).unsqueeze(0).unsqueeze(0);
  const auto scales = torch::full({1}, r, dtype);
  const auto out = model->forward(x, scales, ActionMode::kGreedy, unused);
  return out.sr[0][0].to(torch::kFloat64);
}

struct Canvas {
  cv::Mat img;
  cv::Rect plot;
};

Canvas make_canvas(int width, int height, const std::string& title) {
  Canvas c{cv::Mat(height, width, CV_8UC3, cv::Scalar(255, 255, 255)),
           cv::Rect(60, 40, width - 90, height - 90)};
  cv::putText(c.img, title, {60, 26}, cv::FONT_HERSHEY_SIMPLEX, 0.55, {0, 0, 0}, 1, cv::LINE_AA);
  cv::rectangle(c.img, c.plot, {0, 0, 0}, 1);
  return c;
}

void write_png(const fs::path& png, const cv::Mat& img) {
  if (png.has_parent_path()) fs::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw IoError("cannot write plot '" + png.string() + "'");
}

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path, std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::getline(in, header);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad number '" + s + "' in '" + path.string() + "'");
  }
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw DimensionError("psnr: image shapes differ");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw DimensionError("ssim: image shapes differ");
  const auto x = as_plane(a, "ssim").unsqueeze(0).unsqueeze(0);
  const auto y = as_plane(b, "ssim").unsqueeze(0).unsqueeze(0);
  if (x.size(2) < 11 || x.size(3) < 11) throw DimensionError("ssim: images must be at least 11x11");
  const auto w = gaussian_window(11, 1.5);
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const auto mu_x = torch::conv2d(x, w);
  const auto mu_y = torch::conv2d(y, w);
  const auto var_x = torch::conv2d(x * x, w) - mu_x * mu_x;
  const auto var_y = torch::conv2d(y * y, w) - mu_y * mu_y;
  const auto cov = torch::conv2d(x * y, w) - mu_x * mu_y;
  const auto map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) /
                   ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
  return map.mean().item<double>();
}

torch::Tensor reconstruct(FreqSR& model, const torch::Tensor& image, int64_t out_h, int64_t out_w,
                          double r) {
  check_scale(r);
  if (out_h < 1 || out_w < 1) throw DimensionError("reconstruct: empty output size");
  const bool plane = image.dim() == 2;
  const auto chw = plane ? image.unsqueeze(0) : image;
  if (chw.dim() != 3 || (chw.size(0) != 1 && chw.size(0) != 3)) {
    throw DimensionError("reconstruct: expected [H, W], [1, H, W] or [3, H, W]");
  }
  const auto up = bicubic_resize(chw.to(torch::kFloat64), out_h, out_w).clamp(0.0, 1.0);
  const bool colour = up.size(0) == 3;
  auto ycc = colour ? rgb_to_ycbcr(up) : up;
  const auto luma = pad_to_multiple(ycc[0], kBlockSize);
  const auto sr = run_luma(model, luma, r).slice(0, 0, out_h).slice(1, 0, out_w).clamp(0.0, 1.0);
  if (!colour) return plane ? sr : sr.unsqueeze(0);
  ycc = ycc.clone();
  ycc[0] = sr;
  return ycbcr_to_rgb(ycc).clamp(0.0, 1.0);
}

torch::Tensor super_resolve(FreqSR& model, const torch::Tensor& image, double r) {
  check_scale(r);
  const int64_t h = image.size(-2);
  const int64_t w = image.size(-1);
  return reconstruct(model, image, std::llround(static_cast<double>(h) * r),
                     std::llround(static_cast<double>(w) * r), r);
}

torch::Tensor super_resolve(const torch::Tensor& image, double r, const fs::path& checkpoint) {
  check_scale(r);
  auto loaded = load_checkpoint(checkpoint);
  return super_resolve(loaded.model, image, r);
}

std::map<double, EvalSummary> EvalReport::summary() const {
  std::map<double, EvalSummary> out;
  for (const auto& row : rows) {
    auto& s = out[row.scale];
    ++s.count;
    s.psnr += row.psnr;
    s.ssim += row.ssim;
    s.psnr_bicubic += row.psnr_bicubic;
    s.ssim_bicubic += row.ssim_bicubic;
  }
  for (auto& [scale, s] : out) {
    const double n = static_cast<double>(s.count);
    s.psnr /= n;
    s.ssim /= n;
    s.psnr_bicubic /= n;
    s.ssim_bicubic /= n;
  }
  return out;
}

EvalReport run_eval(const fs::path& dataset_dir, const std::vector<double>& scales, FreqSR& model,
                    const std::string& model_id) {
  if (!fs::is_directory(dataset_dir)) throw IoError("dataset '" + dataset_dir.string() + "' not found");
  const auto files = list_images(dataset_dir);
  if (files.empty()) throw IoError("dataset '" + dataset_dir.string() + "' contains no images");
  if (scales.empty()) throw RangeError("run_eval: no scales given");
  for (const double r : scales) check_scale(r);
  model->eval();

  EvalReport report;
  report.dataset = dataset_dir.filename().string();
  report.model_id = model_id;
  for (const auto& file : files) {
    const auto hr = to_luminance(load_image(file));
    for (const double r : scales) {
      const int64_t h = hr.size(0);
      const int64_t w = hr.size(1);
      const auto small = bicubic_resize(hr, downscaled_size(h, r), downscaled_size(w, r));
      const auto bicubic = bicubic_resize(small, h, w).clamp(0.0, 1.0);
      const auto sr = reconstruct(model, small, h, w, r);
      report.rows.push_back(EvalRow{file.filename().string(), r, psnr(sr, hr), ssim(sr, hr),
                                    psnr(bicubic, hr), ssim(bicubic, hr)});
    }
  }
  return report;
}

void write_eval_csv(const EvalReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "image,scale,psnr,ssim,psnr_bicubic,ssim_bicubic\n";
  for (const auto& row : report.rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g\n", row.scale, row.psnr, row.ssim,
                  row.psnr_bicubic, row.ssim_bicubic);
    out << row.image << buf;
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

EvalReport read_eval_csv(const fs::path& path) {
  std::string header;
  const auto rows = read_csv_rows(path, header);
  if (header != "image,scale,psnr,ssim,psnr_bicubic,ssim_bicubic") {
    throw FormatError("'" + path.string() + "' is not an eval CSV");
  }
  EvalReport report;
  for (const auto& cells : rows) {
    if (cells.size() != 6) throw FormatError("malformed eval row in '" + path.string() + "'");
    report.rows.push_back(EvalRow{cells[0], to_double(cells[1], path), to_double(cells[2], path),
                                  to_double(cells[3], path), to_double(cells[4], path),
                                  to_double(cells[5], path)});
  }
  return report;
}

std::string format_summary(const EvalReport& report) {
  std::ostringstream out;
  out << "dataset " << report.dataset;
  if (!report.model_id.empty()) out << ", model " << report.model_id;
  out << '\n';
  char buf[160];
  std::snprintf(buf, sizeof buf, "%6s %6s %9s %8s %9s %8s\n", "scale", "images", "psnr", "ssim", "bicubic", "ssim");
  out << buf;
  for (const auto& [scale, s] : report.summary()) {
    std::snprintf(buf, sizeof buf, "%6.2f %6lld %9.4f %8.5f %9.4f %8.5f\n", scale,
                  static_cast<long long>(s.count), s.psnr, s.ssim, s.psnr_bicubic, s.ssim_bicubic);
    out << buf;
  }
  return out.str();
}

void plot_histograms(const fs::path& csv, const fs::path& png) {
  std::string header;
  const auto rows = read_csv_rows(csv, header);
  if (header != "scale,threshold,vfp,count,fraction") {
    throw FormatError("'" + csv.string() + "' is not a histogram CSV");
  }
  std::map<double, std::map<int, double>> panels;
  std::map<double, double> thresholds;
  for (const auto& cells : rows) {
    if (cells.size() != 5) throw FormatError("malformed histogram row in '" + csv.string() + "'");
    const double scale = to_double(cells[0], csv);
    thresholds[scale] = to_double(cells[1], csv);
    panels[scale][static_cast<int>(to_double(cells[2], csv))] = to_double(cells[4], csv);
  }
  if (panels.empty()) throw FormatError("'" + csv.string() + "' has no rows");

  const int panel_w = 420;
  const int panel_h = 300;
  cv::Mat sheet(panel_h, panel_w * static_cast<int>(panels.size()), CV_8UC3, cv::Scalar(255, 255, 255));
  int index = 0;
  for (const auto& [scale, bins] : panels) {
    auto c = make_canvas(panel_w, panel_h,
                         "x" + fmt(scale, "%.2f") + "  T=" + fmt(thresholds[scale]) + "  VFP fraction");
    const int max_vfp = std::max(16, bins.rbegin()->first);
    double peak = 0.0;
    for (const auto& [v, f] : bins) peak = std::max(peak, f);
    peak = std::max(peak, 1e-9);
    const double bar_w = static_cast<double>(c.plot.width) / max_vfp;
    for (const auto& [v, f] : bins) {
      const int x0 = c.plot.x + static_cast<int>((v - 1) * bar_w) + 1;
      const int hgt = static_cast<int>(f / peak * (c.plot.height - 4));
      cv::rectangle(c.img, {x0, c.plot.br().y - hgt}, {x0 + std::max(1, static_cast<int>(bar_w) - 2), c.plot.br().y},
                    {180, 110, 40}, cv::FILLED);
    }
    for (int v = 1; v <= max_vfp; v += std::max(1, max_vfp / 8)) {
      const int x = c.plot.x + static_cast<int>((v - 0.5) * bar_w);
      cv::putText(c.img, std::to_string(v), {x - 4, c.plot.br().y + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
    }
    cv::putText(c.img, fmt(peak), {4, c.plot.y + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
    cv::putText(c.img, "VFP", {c.plot.x + c.plot.width / 2 - 12, panel_h - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {0, 0, 0});
    c.img.copyTo(sheet(cv::Rect(index * panel_w, 0, panel_w, panel_h)));
    ++index;
  }
  write_png(png, sheet);
}

void plot_training_log(const fs::path& csv, const fs::path& png) {
  std::string header;
  const auto rows = read_csv_rows(csv, header);
  if (header != "step,lr,l_sfr,l_dct,l_sfd,l_total,mean_action") {
    throw FormatError("'" + csv.string() + "' is not a training log");
  }
  if (rows.empty()) throw FormatError("'" + csv.string() + "' has no rows");
  const char* names[] = {"l_sfr", "l_dct", "l_sfd", "l_total"};
  const cv::Scalar colours[] = {{200, 80, 30}, {40, 160, 40}, {30, 30, 200}, {0, 0, 0}};
  std::vector<std::vector<double>> series(4);
  std::vector<double> steps;
  for (const auto& cells : rows) {
    if (cells.size() != 7) throw FormatError("malformed log row in '" + csv.string() + "'");
    steps.push_back(to_double(cells[0], csv));
    for (int k = 0; k < 4; ++k) series[k].push_back(to_double(cells[2 + k], csv));
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (const double v : s) {
      if (v > 0.0) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
  }
  if (!std::isfinite(lo)) {
    lo = -1.0;
    hi = 0.0;
  }
  if (hi - lo < 1e-6) hi = lo + 1.0;
  auto c = make_canvas(760, 420, "training losses (log10)");
  const double s0 = steps.front();
  const double s1 = std::max(steps.back(), s0 + 1.0);
  for (int k = 0; k < 4; ++k) {
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (series[k][i] <= 0.0) continue;
      const double fx = (steps[i] - s0) / (s1 - s0);
      const double fy = (std::log10(series[k][i]) - lo) / (hi - lo);
      pts.emplace_back(c.plot.x + static_cast<int>(fx * c.plot.width),
                       c.plot.br().y - static_cast<int>(fy * c.plot.height));
    }
    if (pts.size() > 1) cv::polylines(c.img, pts, false, colours[k], 1, cv::LINE_AA);
    cv::putText(c.img, names[k], {c.plot.br().x - 70, c.plot.y + 16 + 16 * k}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                colours[k], 1, cv::LINE_AA);
  }
  cv::putText(c.img, fmt(hi, "%.2f"), {4, c.plot.y + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
  cv::putText(c.img, fmt(lo, "%.2f"), {4, c.plot.br().y}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
  cv::putText(c.img, "step " + fmt(s0, "%.0f"), {c.plot.x, c.plot.br().y + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              {0, 0, 0});
  cv::putText(c.img, fmt(s1, "%.0f"), {c.plot.br().x - 40, c.plot.br().y + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              {0, 0, 0});
  write_png(png, c.img);
}

}  // namespace freqsr
