#include "flowvo/trajectory.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Geometry>

#include "flowvo/errors.hpp"

namespace flowvo {

void write_trajectory(const Trajectory& traj, TrajectoryFormat format,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (const auto& e : traj.entries) {
    if (format == TrajectoryFormat::kKitti) {
      const auto& R = e.pose.R;
      const auto& t = e.pose.t;
      for (int r = 0; r < 3; ++r) {
        out << R(r, 0) << ' ' << R(r, 1) << ' ' << R(r, 2) << ' ' << t(r)
            << (r == 2 ? '\n' : ' ');
      }
    } else {
      Eigen::Quaterniond q(e.pose.R);
      q.normalize();
      out << double(e.frame) << ' ' << e.pose.t.x() << ' ' << e.pose.t.y() << ' '
          << e.pose.t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w()
          << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Trajectory read_trajectory(const std::filesystem::path& path, TrajectoryFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Trajectory traj;
  std::string line;
  int index = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Pose p;
    if (format == TrajectoryFormat::kKitti) {
      double m[12];
      for (double& v : m) {
        if (!(ls >> v)) throw IoError("malformed kitti pose line in " + path.string());
      }
      p.R << m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10];
      p.t << m[3], m[7], m[11];
      traj.push_back(index, p);
    } else {
      double ts, tx, ty, tz, qx, qy, qz, qw;
      if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw IoError("malformed tum pose line in " + path.string());
      }
      p.R = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
      p.t << tx, ty, tz;
      traj.push_back(int(std::llround(ts)), p);
    }
    ++index;
  }
  return traj;
}

}  // namespace flowvo
