#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace amcuq::exp::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
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

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
  std::string color;
};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 0.05);
      lo -= pad;
      hi += pad;
    }
  }
};

class Canvas {
 public:
  Canvas(int w, int h, const std::string& title) : w_(w), h_(h) {
    body_ << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
          << "</text>\n";
  }

  std::ostringstream& body() { return body_; }

  std::string finish(const std::string& table_csv) const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
        << w_ << ' ' << h_ << "\" font-family=\"sans-serif\">\n"
        << "<metadata id=\"data\"><![CDATA[\n"
        << table_csv << "]]></metadata>\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  int w_;
  int h_;
  std::ostringstream body_;
};

// Axes box at (x, y) of size w x h; returns data -> pixel maps.
struct Frame {
  double x, y, w, h;
  Range xr, yr;

  double px(double v) const { return x + (v - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double v) const { return y + h - (v - yr.lo) / (yr.hi - yr.lo) * h; }
};

void draw_axes(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& xlabel) {
  o << "<rect x=\"" << f.x << "\" y=\"" << f.y << "\" width=\"" << f.w << "\" height=\"" << f.h
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  o << "<text x=\"" << f.x + f.w / 2 << "\" y=\"" << f.y - 6 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << escape(title) << "</text>\n";
  o << "<text x=\"" << f.x + f.w / 2 << "\" y=\"" << f.y + f.h + 30
    << "\" text-anchor=\"middle\" font-size=\"10\">" << escape(xlabel) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.xr.lo + (f.xr.hi - f.xr.lo) * k / 4.0;
    const double yv = f.yr.lo + (f.yr.hi - f.yr.lo) * k / 4.0;
    o << "<text x=\"" << f.px(xv) << "\" y=\"" << f.y + f.h + 14 << "\" text-anchor=\"middle\" font-size=\"9\">"
      << num(xv) << "</text>\n";
    o << "<text x=\"" << f.x - 4 << "\" y=\"" << f.py(yv) + 3 << "\" text-anchor=\"end\" font-size=\"9\">" << num(yv)
      << "</text>\n";
    o << "<line x1=\"" << f.x << "\" x2=\"" << f.x + f.w << "\" y1=\"" << f.py(yv) << "\" y2=\"" << f.py(yv)
      << "\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n";
  }
}

void draw_series(std::ostringstream& o, const Frame& f, const Series& s) {
  std::ostringstream path;
  bool pen = false;
  for (const auto& [xv, yv] : s.points) {
    if (!std::isfinite(xv) || !std::isfinite(yv)) {
      pen = false;
      continue;
    }
    path << (pen ? " L" : " M") << num(f.px(xv)) << ' ' << num(f.py(yv));
    pen = true;
  }
  o << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
    << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
  for (const auto& [xv, yv] : s.points) {
    if (std::isfinite(xv) && std::isfinite(yv)) {
      o << "<circle cx=\"" << num(f.px(xv)) << "\" cy=\"" << num(f.py(yv)) << "\" r=\"2\" fill=\"" << s.color
        << "\"/>\n";
    }
  }
}

void draw_legend(std::ostringstream& o, double x, double y, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double yy = y + 16.0 * static_cast<double>(i);
    o << "<line x1=\"" << x << "\" x2=\"" << x + 24 << "\" y1=\"" << yy << "\" y2=\"" << yy << "\" stroke=\""
      << series[i].color << "\" stroke-width=\"2\"" << (series[i].dashed ? " stroke-dasharray=\"5,3\"" : "")
      << "/>\n";
    o << "<text x=\"" << x + 30 << "\" y=\"" << yy + 4 << "\" font-size=\"11\">" << escape(series[i].name)
      << "</text>\n";
  }
}

std::vector<std::string> models_in(const std::vector<uq::ReportRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.model) == out.end()) out.push_back(r.model);
  }
  return out;
}

std::string color_of(const std::vector<std::string>& models, const std::string& m) {
  const auto i = static_cast<std::size_t>(std::find(models.begin(), models.end(), m) - models.begin());
  return kPalette[i % std::size(kPalette)];
}

}  // namespace

std::string metric_panels(const std::vector<uq::ReportRow>& rows, const std::string& title) {
  using Getter = std::function<double(const uq::MetricsReport&)>;
  const std::vector<std::pair<std::string, Getter>> metrics = {
      {"accuracy", [](const auto& m) { return m.accuracy; }},
      {"NLL", [](const auto& m) { return m.nll; }},
      {"Brier", [](const auto& m) { return m.brier; }},
      {"ECE", [](const auto& m) { return m.ece; }},
      {"mean KL", [](const auto& m) { return m.mean_kl; }},
      {"strict coverage", [](const auto& m) { return m.coverage_strict; }},
      {"relaxed coverage", [](const auto& m) { return m.coverage_relaxed; }},
      {"high-confidence proportion", [](const auto& m) { return m.high_confidence_proportion; }},
  };
  const auto models = models_in(rows);
  const int cols = 4;
  const int pw = 230, ph = 160, mx = 60, my = 60;
  const int w = mx + cols * (pw + mx) + 160;
  const int h = my + 2 * (ph + my);
  Canvas canvas(w, h, title);
  auto& o = canvas.body();
  std::vector<Series> legend;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    std::vector<Series> series;
    Range xr, yr;
    for (const auto& m : models) {
      Series s{m, {}, false, color_of(models, m)};
      for (const auto& r : rows) {
        if (r.model != m || std::isnan(r.snr_db)) continue;
        const double v = metrics[k].second(r.metrics);
        s.points.emplace_back(r.snr_db, v);
        xr.add(r.snr_db);
        yr.add(v);
      }
      series.push_back(std::move(s));
    }
    xr.settle();
    yr.settle();
    const double fx = mx + static_cast<double>(k % cols) * (pw + mx);
    const double fy = my + static_cast<double>(k / cols) * (ph + my);
    Frame f{fx, fy, pw, ph, xr, yr};
    draw_axes(o, f, metrics[k].first, "SNR (dB)");
    for (const auto& s : series) draw_series(o, f, s);
    if (k == 0) legend = series;
  }
  draw_legend(o, mx + cols * (pw + mx), my + 10, legend);
  return canvas.finish(uq::to_csv(rows));
}

std::string ci_width_violins(const std::vector<uq::ReportRow>& rows, const std::string& title) {
  const auto models = models_in(rows);
  const int pw = 520, ph = 200, mx = 70, my = 60;
  const int w = 2 * mx + pw + 150;
  const int h = my + static_cast<int>(models.size()) * (ph + my);
  Canvas canvas(w, h, title);
  auto& o = canvas.body();

  Range yr;
  for (const auto& r : rows) {
    yr.add(r.metrics.ci_width_correct.lo);
    yr.add(r.metrics.ci_width_correct.hi);
  }
  yr.settle();
  yr.lo = std::min(yr.lo, 0.0);

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    std::vector<const uq::ReportRow*> mine;
    Range xr;
    for (const auto& r : rows) {
      if (r.model == models[mi] && !std::isnan(r.snr_db)) {
        mine.push_back(&r);
        xr.add(r.snr_db);
      }
    }
    xr.settle();
    const double pad = (xr.hi - xr.lo) / std::max<double>(static_cast<double>(mine.size()), 2.0);
    xr.lo -= pad / 2;
    xr.hi += pad / 2;
    Frame f{static_cast<double>(mx), static_cast<double>(my + mi * (ph + my)), pw, ph, xr, yr};
    draw_axes(o, f, models[mi] + ": CI width of predicted class", "SNR (dB)");
    const double half = 0.45 * f.w / std::max<double>(static_cast<double>(mine.size()), 1.0);
    for (const auto* r : mine) {
      const double cx = f.px(r->snr_db);
      auto violin = [&](const uq::Histogram& hist, double side, const char* color) {
        const auto& c = hist.counts;
        std::uint64_t peak = 0;
        for (auto v : c) peak = std::max(peak, v);
        if (peak == 0) return;
        const double bins = static_cast<double>(c.size());
        std::ostringstream path;
        path << "M" << num(cx) << ' ' << num(f.py(hist.lo));
        for (std::size_t k = 0; k < c.size(); ++k) {
          const double lo = hist.lo + (hist.hi - hist.lo) * static_cast<double>(k) / bins;
          const double hi = hist.lo + (hist.hi - hist.lo) * static_cast<double>(k + 1) / bins;
          const double dx = side * half * static_cast<double>(c[k]) / static_cast<double>(peak);
          path << " L" << num(cx + dx) << ' ' << num(f.py(lo)) << " L" << num(cx + dx) << ' ' << num(f.py(hi));
        }
        path << " L" << num(cx) << ' ' << num(f.py(hist.hi)) << " Z";
        o << "<path d=\"" << path.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.6\" stroke=\"" << color
          << "\" stroke-width=\"0.5\"/>\n";
      };
      violin(r->metrics.ci_width_correct, -1.0, kPalette[2]);
      violin(r->metrics.ci_width_incorrect, 1.0, kPalette[1]);
    }
  }
  draw_legend(o, 2 * mx + pw, my + 10,
              {{"correct (left)", {}, false, kPalette[2]}, {"incorrect (right)", {}, false, kPalette[1]}});
  return canvas.finish(uq::to_csv(rows));
}

std::string attack_over_snr(const std::vector<uq::ReportRow>& attacked, const std::vector<uq::ReportRow>& clean,
                            const std::string& title) {
  const auto models = models_in(clean.empty() ? attacked : clean);
  const int pw = 480, ph = 300, mx = 70, my = 60;
  Canvas canvas(2 * mx + pw + 220, 2 * my + ph, title);
  auto& o = canvas.body();
  std::vector<Series> series;
  Range xr, yr;
  yr.add(0.0);
  yr.add(1.0);
  for (const auto& m : models) {
    Series a{m + " (attacked)", {}, false, color_of(models, m)};
    Series c{m + " (clean)", {}, true, color_of(models, m)};
    for (const auto& r : attacked) {
      if (r.model == m && !std::isnan(r.snr_db)) a.points.emplace_back(r.snr_db, r.metrics.accuracy), xr.add(r.snr_db);
    }
    for (const auto& r : clean) {
      if (r.model == m && !std::isnan(r.snr_db)) c.points.emplace_back(r.snr_db, r.metrics.accuracy), xr.add(r.snr_db);
    }
    series.push_back(std::move(a));
    series.push_back(std::move(c));
  }
  xr.settle();
  Frame f{static_cast<double>(mx), static_cast<double>(my), pw, ph, xr, yr};
  draw_axes(o, f, "accuracy", "SNR (dB)");
  for (const auto& s : series) draw_series(o, f, s);
  draw_legend(o, 2 * mx + pw, my + 10, series);
  return canvas.finish(uq::to_csv(attacked) + uq::to_csv(clean));
}

std::string attack_over_pnr(const std::vector<uq::ReportRow>& attacked, const std::vector<uq::ReportRow>& clean,
                            double snr_db, const std::string& title) {
  const auto models = models_in(attacked);
  const int pw = 480, ph = 300, mx = 70, my = 60;
  Canvas canvas(2 * mx + pw + 220, 2 * my + ph, title);
  auto& o = canvas.body();
  Range xr, yr;
  yr.add(0.0);
  yr.add(1.0);
  for (const auto& r : attacked) xr.add(r.pnr_db);
  xr.settle();
  std::vector<Series> series;
  std::vector<uq::ReportRow> clean_rows;
  for (const auto& m : models) {
    Series a{m + " (attacked)", {}, false, color_of(models, m)};
    for (const auto& r : attacked) {
      if (r.model == m) a.points.emplace_back(r.pnr_db, r.metrics.accuracy);
    }
    std::sort(a.points.begin(), a.points.end());
    series.push_back(std::move(a));
    for (const auto& r : clean) {
      if (r.model == m && r.snr_db == snr_db) {
        series.push_back({m + " (clean)", {{xr.lo, r.metrics.accuracy}, {xr.hi, r.metrics.accuracy}}, true,
                          color_of(models, m)});
        clean_rows.push_back(r);
      }
    }
  }
  Frame f{static_cast<double>(mx), static_cast<double>(my), pw, ph, xr, yr};
  draw_axes(o, f, "accuracy at SNR " + num(snr_db) + " dB", "PNR (dB)");
  for (const auto& s : series) draw_series(o, f, s);
  draw_legend(o, 2 * mx + pw, my + 10, series);
  return canvas.finish(uq::to_csv(attacked) + uq::to_csv(clean_rows));
}

}  // namespace amcuq::exp::svg
