#include "cpf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace cpf::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Deterministic, locale-independent number formatting for the CSV writers.
std::string fmt(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.10g", value);
  return buffer;
}

const sim::StationTickRecord* find_station(const sim::TickRecord& tick,
                                           std::uint32_t station_id) {
  for (const sim::StationTickRecord& station : tick.stations) {
    if (station.station_id == station_id) return &station;
  }
  return nullptr;
}

// Heaviest confirmed track associated with the pedestrian, or null.
const sim::TrackObservation* best_track_for(const sim::StationTickRecord& station,
                                            std::size_t pedestrian) {
  const sim::TrackObservation* best = nullptr;
  for (const sim::TrackObservation& track : station.tracks) {
    if (track.pedestrian != static_cast<int>(pedestrian)) continue;
    if (best == nullptr || track.weight > best->weight) best = &track;
  }
  return best;
}

}  // namespace

RunSummary summarize(const std::vector<sim::TickRecord>& records,
                     std::size_t pedestrian_count, std::uint32_t eval_station_id,
                     double window_fraction) {
  RunSummary summary;
  summary.eval_station_id = eval_station_id;
  summary.tick_count = records.size();
  window_fraction = std::clamp(window_fraction, 0.0, 1.0);
  summary.window_start_tick =
      static_cast<std::size_t>(std::floor(window_fraction * static_cast<double>(records.size())));

  // Pedestrian statistics at the evaluation station over the tail window.
  for (std::size_t ped = 0; ped < pedestrian_count; ++ped) {
    PedestrianStat stat;
    stat.pedestrian = ped;
    double sum_var_x = 0.0;
    double sum_var_y = 0.0;
    double sum_error = 0.0;
    double sum_nees = 0.0;
    std::size_t error_count = 0;
    std::size_t nees_count = 0;
    for (std::size_t t = summary.window_start_tick; t < records.size(); ++t) {
      const sim::StationTickRecord* station = find_station(records[t], eval_station_id);
      if (station == nullptr) continue;
      const sim::TrackObservation* track = best_track_for(*station, ped);
      if (track == nullptr) continue;
      ++stat.ticks_tracked;
      sum_var_x += track->cov(0, 0);
      sum_var_y += track->cov(1, 1);
      if (std::isfinite(track->position_error)) {
        sum_error += track->position_error;
        ++error_count;
      }
      if (std::isfinite(track->nees)) {
        sum_nees += track->nees;
        ++nees_count;
      }
    }
    const double n = static_cast<double>(stat.ticks_tracked);
    stat.std_x = stat.ticks_tracked > 0 ? std::sqrt(sum_var_x / n) : kNaN;
    stat.std_y = stat.ticks_tracked > 0 ? std::sqrt(sum_var_y / n) : kNaN;
    stat.mean_error = error_count > 0 ? sum_error / static_cast<double>(error_count) : kNaN;
    stat.mean_nees = nees_count > 0 ? sum_nees / static_cast<double>(nees_count) : kNaN;
    summary.pedestrians.push_back(stat);
  }

  // Station statistics over every station seen in the records.
  if (!records.empty()) {
    for (const sim::StationTickRecord& first : records.front().stations) {
      StationStat stat;
      stat.station_id = first.station_id;
      stat.mean_trace.reserve(records.size());
      double sum_nees = 0.0;
      std::size_t nees_count = 0;
      for (std::size_t t = 0; t < records.size(); ++t) {
        const sim::StationTickRecord* station = find_station(records[t], stat.station_id);
        if (station == nullptr) {
          stat.mean_trace.push_back(kNaN);
          continue;
        }
        double sum_trace = 0.0;
        std::size_t trace_count = 0;
        for (const sim::TrackObservation& track : station->tracks) {
          sum_trace += track.trace_xytheta;
          ++trace_count;
          if (t >= summary.window_start_tick && std::isfinite(track.nees)) {
            sum_nees += track.nees;
            ++nees_count;
          }
        }
        stat.mean_trace.push_back(trace_count > 0
                                      ? sum_trace / static_cast<double>(trace_count)
                                      : kNaN);
      }
      stat.mean_nees = nees_count > 0 ? sum_nees / static_cast<double>(nees_count) : kNaN;
      summary.stations.push_back(std::move(stat));
    }
  }
  return summary;
}

void write_ticks_csv(std::ostream& out, const std::vector<sim::TickRecord>& records) {
  out << kTicksCsvSchema << '\n';
  out << "time,station_id,local_id,weight,x,y,vx,vy,cov_xx,cov_yy,trace_xytheta,"
         "pedestrian,position_error,nees\n";
  for (const sim::TickRecord& tick : records) {
    for (const sim::StationTickRecord& station : tick.stations) {
      for (const sim::TrackObservation& track : station.tracks) {
        out << fmt(tick.time) << ',' << station.station_id << ',' << track.local_id << ','
            << fmt(track.weight) << ',' << fmt(track.mean(0)) << ',' << fmt(track.mean(1))
            << ',' << fmt(track.mean(2)) << ',' << fmt(track.mean(3)) << ','
            << fmt(track.cov(0, 0)) << ',' << fmt(track.cov(1, 1)) << ','
            << fmt(track.trace_xytheta) << ',' << track.pedestrian << ','
            << fmt(track.position_error) << ',' << fmt(track.nees) << '\n';
      }
    }
  }
}

void write_summary_csv(std::ostream& out, const RunSummary& summary) {
  out << kSummaryCsvSchema << '\n';
  out << "pedestrian,std_x,std_y,mean_error,mean_nees,ticks_tracked\n";
  for (const PedestrianStat& stat : summary.pedestrians) {
    out << stat.pedestrian << ',' << fmt(stat.std_x) << ',' << fmt(stat.std_y) << ','
        << fmt(stat.mean_error) << ',' << fmt(stat.mean_nees) << ',' << stat.ticks_tracked
        << '\n';
  }
}

void write_nees_csv(std::ostream& out, const RunSummary& summary) {
  out << kNeesCsvSchema << '\n';
  out << "station_id,mean_nees\n";
  for (const StationStat& stat : summary.stations) {
    out << stat.station_id << ',' << fmt(stat.mean_nees) << '\n';
  }
}

void write_trace_csv(std::ostream& out, const std::vector<sim::TickRecord>& records,
                     std::uint32_t station_id) {
  out << kTraceCsvSchema << '\n';
  out << "time,local_id,trace_xytheta\n";
  for (const sim::TickRecord& tick : records) {
    const sim::StationTickRecord* station = find_station(tick, station_id);
    if (station == nullptr) continue;
    for (const sim::TrackObservation& track : station->tracks) {
      out << fmt(tick.time) << ',' << track.local_id << ',' << fmt(track.trace_xytheta)
          << '\n';
    }
  }
}

}  // namespace cpf::metrics
