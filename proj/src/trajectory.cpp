#include "msbm/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace msbm {

int TrajectoryBatch::index_of_time(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] == t) return static_cast<int>(i);
  }
  return -1;
}

const Eigen::MatrixXd& TrajectoryBatch::at_time(double t) const {
  const int i = index_of_time(t);
  if (i < 0) throw std::out_of_range("TrajectoryBatch: no slice recorded at requested time");
  return states[static_cast<std::size_t>(i)];
}

void write_trajectory_csv(const std::filesystem::path& file, const TrajectoryBatch& traj,
                          const std::vector<std::string>& comment_lines) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  for (const std::string& line : comment_lines) out << "# " << line << "\n";
  out << "path_id,t";
  for (int c = 0; c < traj.dim(); ++c) out << ",x" << c;
  out << "\n";
  char buf[32];
  for (int p = 0; p < traj.batch(); ++p) {
    for (int s = 0; s < traj.num_times(); ++s) {
      out << p;
      std::snprintf(buf, sizeof(buf), "%.17g", traj.times[static_cast<std::size_t>(s)]);
      out << ',' << buf;
      const Eigen::MatrixXd& st = traj.states[static_cast<std::size_t>(s)];
      for (int c = 0; c < traj.dim(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", st(p, c));
        out << ',' << buf;
      }
      out << "\n";
    }
  }
}

}  // namespace msbm
