#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dvseg/eval.hpp"
#include "dvseg/synthetic.hpp"

using namespace dvseg;

TEST_CASE("render_frame: deterministic and annotated") {
  SyntheticSceneSpec spec = make_tier_spec(Tier::Easy, 5, 8, 128, 80, 2);
  const RenderedFrame a = render_frame(spec, 3);
  const RenderedFrame b = render_frame(spec, 3);
  CHECK(a.image.data == b.image.data);
  CHECK(a.mask.ids == b.mask.ids);

  int obj1 = 0, obj2 = 0;
  for (std::uint8_t v : a.mask.ids) {
    obj1 += (v == 1);
    obj2 += (v == 2);
  }
  CHECK(obj1 > 0);
  CHECK(obj2 > 0);
}

TEST_CASE("render_frame: ellipse raster area matches the analytic area") {
  SyntheticSceneSpec spec;
  spec.frames = 1;
  spec.width = 200;
  spec.height = 160;
  ObjectSpec o;
  o.shape = ShapeKind::Ellipse;
  o.cx = 100.0;
  o.cy = 80.0;
  o.rx = 41.0;
  o.ry = 27.0;
  spec.objects.push_back(o);

  const RenderedFrame f = render_frame(spec, 0);
  int count = 0;
  for (std::uint8_t v : f.mask.ids) count += (v == 1);
  const double area = 3.14159265358979 * o.rx * o.ry;
  // Ramanujan perimeter approximation bounds the rasterization error
  const double perimeter =
      3.14159265358979 * (3.0 * (o.rx + o.ry) -
                          std::sqrt((3.0 * o.rx + o.ry) * (o.rx + 3.0 * o.ry)));
  CHECK(std::abs(count - area) <= perimeter);
}

TEST_CASE("render_frame: objects leaving the frame raise GenerationError") {
  SyntheticSceneSpec spec;
  spec.frames = 10;
  spec.width = 64;
  spec.height = 64;
  ObjectSpec o;
  o.cx = 32.0;
  o.cy = 32.0;
  o.rx = o.ry = 10.0;
  o.vx = 8.0;  // exits quickly
  spec.objects.push_back(o);
  CHECK_THROWS_AS(render_frame(spec, 9), GenerationError);
}

TEST_CASE("write_sequence: deterministic bytes on disk") {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "dvseg_synth_test").string();
  std::filesystem::remove_all(dir);
  SyntheticSceneSpec spec = make_tier_spec(Tier::Medium, 11, 3, 96, 64, 1);
  write_sequence(spec, dir);
  CHECK(sequence_frame_count(dir) == 3);

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const std::string once = slurp(frame_path(dir, 1));
  write_sequence(spec, dir);
  CHECK(slurp(frame_path(dir, 1)) == once);
  std::filesystem::remove_all(dir);
}

TEST_CASE("jaccard: identity, disjoint, counting example, size mismatch") {
  IndexMask a(4, 4), b(4, 4);
  a.at(0, 0) = 1;
  a.at(0, 1) = 1;
  b.at(0, 0) = 1;
  b.at(0, 1) = 1;
  CHECK(jaccard(a, b, 1) == doctest::Approx(1.0));

  IndexMask c(4, 4);
  c.at(3, 3) = 1;
  CHECK(jaccard(a, c, 1) == doctest::Approx(0.0));

  // |intersection| = 2, |union| = 6
  IndexMask d(4, 4), e(4, 4);
  for (int i = 0; i < 4; ++i) d.ids[i] = 1;
  for (int i = 2; i < 6; ++i) e.ids[i] = 1;
  CHECK(jaccard(d, e, 1) == doctest::Approx(1.0 / 3.0));

  CHECK(jaccard(a, b, 7) == doctest::Approx(1.0));  // both empty for id 7

  CHECK_THROWS_AS(jaccard(a, IndexMask(3, 4), 1), DimensionError);
}

TEST_CASE("evaluate_masks and the text report") {
  IndexMask gt(4, 4);
  gt.at(0, 0) = 1;
  gt.at(0, 1) = 1;
  IndexMask perfect = gt;
  IndexMask half(4, 4);
  half.at(0, 0) = 1;

  const EvalReport r = evaluate_masks({gt, perfect, half}, {gt, gt, gt});
  CHECK(r.frames == 3);
  REQUIRE(r.objects.size() == 1);
  CHECK(r.objects[0].per_frame[0] == doctest::Approx(1.0));
  CHECK(r.objects[0].per_frame[1] == doctest::Approx(0.5));
  CHECK(r.mean_j == doctest::Approx(0.75));

  std::ostringstream out;
  write_report(out, r);
  const std::string text = out.str();
  CHECK(text.find("frames 3") != std::string::npos);
  CHECK(text.find("mean_j 0.750000") != std::string::npos);
}
