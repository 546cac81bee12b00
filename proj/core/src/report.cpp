#include <cmath>
#include <cstdio>
#include <fstream>

#include "balltrain/eval.hpp"

namespace balltrain {

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("aggregate_runs: need at least one value");
  Aggregate a;
  a.n = values.size();
  double sum = 0;
  a.best = values[0];
  for (double v : values) {
    sum += v;
    if (v > a.best) a.best = v;
  }
  a.mean = sum / double(a.n);
  if (a.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / double(a.n - 1));
  }
  return a;
}

std::string format_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

namespace {
std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  f << "setting,attack,epsilon,iterations,eta,target_model,accuracy_pct,"
       "mean_pct,std_pct,best_pct,seed,config_hash\n";
  for (const auto& r : report.rows) {
    f << r.setting << "," << r.attack << "," << format_g(r.epsilon) << ",";
    if (r.iterations > 0) f << r.iterations;
    f << ",";
    if (r.eta > 0) f << format_g(r.eta);
    f << "," << r.target_model << ",";
    if (r.accuracy_pct >= 0) f << format_pct(r.accuracy_pct);
    f << ",";
    if (r.agg.n > 0)
      f << format_pct(r.agg.mean) << "," << format_pct(r.agg.stddev) << ","
        << format_pct(r.agg.best);
    else
      f << ",,";
    f << "," << r.seed << "," << r.config_hash << "\n";
  }
}

}  // namespace balltrain
