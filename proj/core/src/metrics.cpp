#include "hjbppo/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hjbppo::metrics {

namespace {

constexpr const char* kEpisodeHeader =
    "episode, timestep, reward, reward_mean50, reward_std50, hjb_loss, "
    "hjb_mean50, bellman_loss, bellman_mean50";

constexpr const char* kIterationHeader =
    "iteration, timestep, episodes, policy_objective, value_total, "
    "bellman_mse, hjb_mse, clip_fraction, mean_ratio, approx_kl, "
    "policy_grad_norm, value_grad_norm, lambda_hjb";

// Shortest decimal form that parses back to the exact same double.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt(int v) {
  char buf[16];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open file for writing: " + path.string());
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

double parse_f64(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad numeric CSV field: " + std::string(s));
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad integer CSV field: " + std::string(s));
  }
  return v;
}

}  // namespace

SmoothedSeries::SmoothedSeries(int window) : window_(window) {
  if (window <= 0) throw std::invalid_argument("SmoothedSeries: window must be positive");
}

void SmoothedSeries::push(double value) {
  ring_.push_back(value);
  if (static_cast<int>(ring_.size()) > window_) ring_.pop_front();
  ++total_;
}

double SmoothedSeries::mean() const {
  if (ring_.empty()) return 0.0;
  double acc = 0.0;
  for (double v : ring_) acc += v;
  return acc / static_cast<double>(ring_.size());
}

double SmoothedSeries::std() const {
  if (ring_.empty()) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (double v : ring_) {
    const double d = v - m;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(ring_.size()));
}

MetricsSink::MetricsSink(int window)
    : window_(window), reward_(window), hjb_(window), bellman_(window) {}

void MetricsSink::record_episode(const EpisodeRecord& rec) {
  if (!rows_.empty() && rec.episode != rows_.back().record.episode + 1) {
    throw std::invalid_argument(
        "record_episode: episode index " + std::to_string(rec.episode) +
        " does not follow " + std::to_string(rows_.back().record.episode));
  }
  reward_.push(rec.reward);
  hjb_.push(rec.hjb_loss);
  bellman_.push(rec.bellman_loss);
  EpisodeRow row;
  row.record = rec;
  row.reward_mean = reward_.mean();
  row.reward_std = reward_.std();
  row.hjb_mean = hjb_.mean();
  row.bellman_mean = bellman_.mean();
  rows_.push_back(row);
}

void MetricsSink::record_iteration(const IterationRecord& rec) {
  iterations_.push_back(rec);
}

void MetricsSink::export_csv(const std::filesystem::path& path) const {
  std::ofstream out = open_out(path);
  out << kEpisodeHeader << '\n';
  for (const EpisodeRow& row : rows_) {
    const EpisodeRecord& r = row.record;
    out << fmt(r.episode) << ", " << fmt(r.timestep) << ", " << fmt(r.reward)
        << ", " << fmt(row.reward_mean) << ", " << fmt(row.reward_std) << ", "
        << fmt(r.hjb_loss) << ", " << fmt(row.hjb_mean) << ", "
        << fmt(r.bellman_loss) << ", " << fmt(row.bellman_mean) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void MetricsSink::export_iterations_csv(
    const std::filesystem::path& path) const {
  std::ofstream out = open_out(path);
  out << kIterationHeader << '\n';
  for (const IterationRecord& r : iterations_) {
    out << fmt(r.iteration) << ", " << fmt(r.timestep) << ", "
        << fmt(r.episodes_finished) << ", " << fmt(r.policy_objective) << ", "
        << fmt(r.value_total) << ", " << fmt(r.bellman_mse) << ", "
        << fmt(r.hjb_mse) << ", " << fmt(r.clip_fraction) << ", "
        << fmt(r.mean_ratio) << ", " << fmt(r.approx_kl) << ", "
        << fmt(r.policy_grad_norm) << ", " << fmt(r.value_grad_norm) << ", "
        << fmt(r.lambda_hjb_effective) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<EpisodeRow> MetricsSink::parse_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("empty CSV: " + path.string());
  }
  if (trim(line) != kEpisodeHeader) {
    throw std::invalid_argument("unexpected CSV header in " + path.string());
  }
  std::vector<EpisodeRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 9) {
      throw std::invalid_argument("expected 9 CSV fields, got " +
                                  std::to_string(f.size()));
    }
    EpisodeRow row;
    row.record.episode = parse_int<int>(f[0]);
    row.record.timestep = parse_int<std::uint64_t>(f[1]);
    row.record.reward = parse_f64(f[2]);
    row.reward_mean = parse_f64(f[3]);
    row.reward_std = parse_f64(f[4]);
    row.record.hjb_loss = parse_f64(f[5]);
    row.hjb_mean = parse_f64(f[6]);
    row.record.bellman_loss = parse_f64(f[7]);
    row.bellman_mean = parse_f64(f[8]);
    rows.push_back(row);
  }
  return rows;
}

void MetricsSink::serialize(io::BinaryWriter& w) const {
  w.u32(static_cast<std::uint32_t>(window_));
  w.u64(rows_.size());
  for (const EpisodeRow& row : rows_) {
    const EpisodeRecord& r = row.record;
    w.i32(r.episode);
    w.u64(r.timestep);
    w.f64(r.reward);
    w.i32(r.length);
    w.f64(r.hjb_loss);
    w.f64(r.bellman_loss);
    w.f64(row.reward_mean);
    w.f64(row.reward_std);
    w.f64(row.hjb_mean);
    w.f64(row.bellman_mean);
  }
  w.u64(iterations_.size());
  for (const IterationRecord& r : iterations_) {
    w.i32(r.iteration);
    w.u64(r.timestep);
    w.i32(r.episodes_finished);
    w.f64(r.policy_objective);
    w.f64(r.value_total);
    w.f64(r.bellman_mse);
    w.f64(r.hjb_mse);
    w.f64(r.clip_fraction);
    w.f64(r.mean_ratio);
    w.f64(r.approx_kl);
    w.f64(r.policy_grad_norm);
    w.f64(r.value_grad_norm);
    w.f64(r.lambda_hjb_effective);
  }
}

void MetricsSink::deserialize(io::BinaryReader& r) {
  window_ = static_cast<int>(r.u32());
  reward_ = SmoothedSeries(window_);
  hjb_ = SmoothedSeries(window_);
  bellman_ = SmoothedSeries(window_);
  rows_.clear();
  iterations_.clear();
  const std::uint64_t n_rows = r.u64();
  rows_.reserve(n_rows);
  for (std::uint64_t i = 0; i < n_rows; ++i) {
    EpisodeRow row;
    row.record.episode = r.i32();
    row.record.timestep = r.u64();
    row.record.reward = r.f64();
    row.record.length = r.i32();
    row.record.hjb_loss = r.f64();
    row.record.bellman_loss = r.f64();
    row.reward_mean = r.f64();
    row.reward_std = r.f64();
    row.hjb_mean = r.f64();
    row.bellman_mean = r.f64();
    reward_.push(row.record.reward);
    hjb_.push(row.record.hjb_loss);
    bellman_.push(row.record.bellman_loss);
    rows_.push_back(row);
  }
  const std::uint64_t n_iter = r.u64();
  iterations_.reserve(n_iter);
  for (std::uint64_t i = 0; i < n_iter; ++i) {
    IterationRecord rec;
    rec.iteration = r.i32();
    rec.timestep = r.u64();
    rec.episodes_finished = r.i32();
    rec.policy_objective = r.f64();
    rec.value_total = r.f64();
    rec.bellman_mse = r.f64();
    rec.hjb_mse = r.f64();
    rec.clip_fraction = r.f64();
    rec.mean_ratio = r.f64();
    rec.approx_kl = r.f64();
    rec.policy_grad_norm = r.f64();
    rec.value_grad_norm = r.f64();
    rec.lambda_hjb_effective = r.f64();
    iterations_.push_back(rec);
  }
}

// --- SVG --- //

namespace {

struct AxisMap {
  double lo = 0.0, hi = 1.0;
  double px0 = 0.0, px1 = 1.0;  // pixel range (for y, px0 is the BOTTOM)
  bool log = false;

  double map(double v) const {
    double t;
    if (log) {
      t = (std::log10(v) - std::log10(lo)) /
          (std::log10(hi) - std::log10(lo));
    } else {
      t = (v - lo) / (hi - lo);
    }
    return px0 + t * (px1 - px0);
  }
};

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Round the raw step to a 1/2/5 x 10^k "nice" value.
double nice_step(double raw) {
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  double nice;
  if (frac <= 1.0) nice = 1.0;
  else if (frac <= 2.0) nice = 2.0;
  else if (frac <= 5.0) nice = 5.0;
  else nice = 10.0;
  return nice * mag;
}

std::vector<double> linear_ticks(double lo, double hi, int target = 6) {
  std::vector<double> ticks;
  if (!(hi > lo)) return {lo};
  const double step = nice_step((hi - lo) / target);
  double first = std::ceil(lo / step) * step;
  for (double v = first; v <= hi + step * 1e-9; v += step) {
    // snap values like -1.2e-17 back to 0 for clean labels
    if (std::abs(v) < step * 1e-9) v = 0.0;
    ticks.push_back(v);
  }
  return ticks;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> ticks;
  const int k0 = static_cast<int>(std::ceil(std::log10(lo) - 1e-9));
  const int k1 = static_cast<int>(std::floor(std::log10(hi) + 1e-9));
  for (int k = k0; k <= k1; ++k) ticks.push_back(std::pow(10.0, k));
  if (ticks.size() < 2) {
    // under a decade of span: fall back to nice linear ticks
    std::vector<double> lin = linear_ticks(lo, hi);
    std::vector<double> pos;
    for (double v : lin) {
      if (v > 0.0) pos.push_back(v);
    }
    if (pos.size() >= 2) return pos;
  }
  return ticks.empty() ? std::vector<double>{lo, hi} : ticks;
}

std::string tick_label(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void export_svg(const std::filesystem::path& path,
                std::span<const SvgSeries> series, const SvgOptions& opt) {
  if (series.empty()) throw std::invalid_argument("export_svg: no series");

  // Data ranges. On a log axis only positive values participate.
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  bool any = false;
  for (const SvgSeries& s : series) {
    if (s.x.size() != s.mean.size() ||
        (!s.std.empty() && s.std.size() != s.mean.size())) {
      throw std::invalid_argument("export_svg: series size mismatch");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.mean[i])) continue;
      const double sd = s.std.empty() ? 0.0 : s.std[i];
      double lo = s.mean[i] - sd, hi = s.mean[i] + sd;
      if (opt.log_y) {
        if (hi <= 0.0) continue;
        if (lo <= 0.0) lo = hi;  // band clipped later; range from positives
        if (s.mean[i] <= 0.0) continue;
      }
      if (!any) {
        x_lo = x_hi = s.x[i];
        y_lo = lo;
        y_hi = hi;
        any = true;
      } else {
        x_lo = std::min(x_lo, s.x[i]);
        x_hi = std::max(x_hi, s.x[i]);
        y_lo = std::min(y_lo, lo);
        y_hi = std::max(y_hi, hi);
      }
    }
  }
  if (!any) throw std::invalid_argument("export_svg: no drawable points");
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (opt.log_y) {
    const double pad = std::pow(y_hi / y_lo, 0.05);
    y_lo /= pad > 1.0 ? pad : 1.26;  // ensure visible span
    y_hi *= pad > 1.0 ? pad : 1.26;
  } else {
    double pad = 0.05 * (y_hi - y_lo);
    if (pad == 0.0) pad = y_hi == 0.0 ? 1.0 : std::abs(y_hi) * 0.1;
    y_lo -= pad;
    y_hi += pad;
  }

  const double ml = 78, mr = 24, mt = 46, mb = 56;
  const double pw = opt.width - ml - mr;
  const double ph = opt.height - mt - mb;
  AxisMap xm{x_lo, x_hi, ml, ml + pw, false};
  AxisMap ym{y_lo, y_hi, mt + ph, mt, opt.log_y};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width
      << "\" height=\"" << opt.height << "\" viewBox=\"0 0 " << opt.width
      << ' ' << opt.height << "\">\n";
  svg << "<rect width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" fill=\"white\"/>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";

  // grid + ticks
  const std::vector<double> xticks = linear_ticks(x_lo, x_hi);
  const std::vector<double> yticks =
      opt.log_y ? log_ticks(y_lo, y_hi) : linear_ticks(y_lo, y_hi);
  for (double t : xticks) {
    const double X = xm.map(t);
    svg << "<line x1=\"" << px(X) << "\" y1=\"" << px(mt) << "\" x2=\""
        << px(X) << "\" y2=\"" << px(mt + ph)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << px(X) << "\" y=\"" << px(mt + ph + 18)
        << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : yticks) {
    const double Y = ym.map(t);
    svg << "<line x1=\"" << px(ml) << "\" y1=\"" << px(Y) << "\" x2=\""
        << px(ml + pw) << "\" y2=\"" << px(Y)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << px(ml - 8) << "\" y=\"" << px(Y + 4)
        << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  // frame
  svg << "<rect x=\"" << px(ml) << "\" y=\"" << px(mt) << "\" width=\""
      << px(pw) << "\" height=\"" << px(ph)
      << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";

  // bands then lines (bands behind)
  for (const SvgSeries& s : series) {
    if (s.std.empty()) continue;
    std::string upper, lower;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.mean[i])) continue;
      double hi = s.mean[i] + s.std[i];
      double lo = s.mean[i] - s.std[i];
      if (opt.log_y) {
        if (hi <= 0.0) continue;
        lo = std::max(lo, y_lo);
      } else {
        hi = std::clamp(hi, y_lo, y_hi);
        lo = std::clamp(lo, y_lo, y_hi);
      }
      upper += px(xm.map(s.x[i])) + ',' + px(ym.map(hi)) + ' ';
      lower = px(xm.map(s.x[i])) + ',' + px(ym.map(lo)) + ' ' + lower;
    }
    if (upper.empty()) continue;
    svg << "<polygon points=\"" << upper << lower << "\" fill=\"" << s.color
        << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
  }
  for (const SvgSeries& s : series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.mean[i])) continue;
      if (opt.log_y && s.mean[i] <= 0.0) continue;
      pts += px(xm.map(s.x[i])) + ',' + px(ym.map(s.mean[i])) + ' ';
    }
    if (pts.empty()) continue;
    svg << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\""
        << s.color << "\" stroke-width=\"1.8\"/>\n";
  }

  // legend (top-right inside the plot)
  {
    const double lw = 150, lh = 20.0 * static_cast<double>(series.size()) + 10;
    const double lx = ml + pw - lw - 10, ly = mt + 10;
    svg << "<rect x=\"" << px(lx) << "\" y=\"" << px(ly) << "\" width=\""
        << px(lw) << "\" height=\"" << px(lh)
        << "\" fill=\"white\" fill-opacity=\"0.85\" stroke=\"#888\"/>\n";
    double row_y = ly + 16;
    for (const SvgSeries& s : series) {
      svg << "<line x1=\"" << px(lx + 8) << "\" y1=\"" << px(row_y - 4)
          << "\" x2=\"" << px(lx + 32) << "\" y2=\"" << px(row_y - 4)
          << "\" stroke=\"" << s.color << "\" stroke-width=\"2.5\"/>\n";
      svg << "<text x=\"" << px(lx + 38) << "\" y=\"" << px(row_y) << "\">"
          << xml_escape(s.label) << "</text>\n";
      row_y += 20;
    }
  }

  // labels
  svg << "<text x=\"" << px(ml + pw / 2) << "\" y=\"" << px(26)
      << "\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(opt.title)
      << "</text>\n";
  svg << "<text x=\"" << px(ml + pw / 2) << "\" y=\"" << px(mt + ph + 40)
      << "\" text-anchor=\"middle\">" << xml_escape(opt.x_label)
      << "</text>\n";
  svg << "<text x=\"" << px(20) << "\" y=\"" << px(mt + ph / 2)
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << px(20) << ' '
      << px(mt + ph / 2) << ")\">" << xml_escape(opt.y_label) << "</text>\n";
  svg << "</g>\n</svg>\n";

  std::ofstream out = open_out(path);
  out << svg.str();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void export_run_charts(const MetricsSink& sink,
                       const std::filesystem::path& directory,
                       const std::string& run_label) {
  const std::vector<EpisodeRow>& rows = sink.rows();
  if (rows.empty()) return;
  std::vector<double> x, rm, rs, hm, bm;
  x.reserve(rows.size());
  for (const EpisodeRow& row : rows) {
    x.push_back(static_cast<double>(row.record.episode));
    rm.push_back(row.reward_mean);
    rs.push_back(row.reward_std);
    hm.push_back(row.hjb_mean);
    bm.push_back(row.bellman_mean);
  }
  {
    SvgSeries s{run_label, "#1f77b4", x, rm, rs};
    SvgOptions o;
    o.title = "episode reward (50-episode mean, shaded std)";
    o.y_label = "reward";
    export_svg(directory / "reward.svg", std::span(&s, 1), o);
  }
  {
    SvgSeries s{run_label, "#d62728", x, hm, {}};
    SvgOptions o;
    o.title = "HJB residual loss (50-episode mean)";
    o.y_label = "mean squared residual";
    o.log_y = true;
    export_svg(directory / "hjb_loss.svg", std::span(&s, 1), o);
  }
  {
    SvgSeries s{run_label, "#2ca02c", x, bm, {}};
    SvgOptions o;
    o.title = "Bellman loss (50-episode mean)";
    o.y_label = "mean squared residual";
    o.log_y = true;
    export_svg(directory / "bellman_loss.svg", std::span(&s, 1), o);
  }
}

}  // namespace hjbppo::metrics
