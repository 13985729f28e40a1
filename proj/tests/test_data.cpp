#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "rcg/data.hpp"

namespace rcg {
namespace {

namespace fs = std::filesystem;

class DataFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(RCG_TEST_TMP) / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  std::string write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir_;
};

const char* kBeta3x4 =
    "site_id,s1,s2,s3,s4\n"
    "cg01,0.1,0.2,0.3,0.4\n"
    "cg02,0.5,0.6,0.7,0.8\n"
    "cg03,0.15,0.25,0.35,0.45\n";

const char* kCov4 =
    "sample_id,age,smoker\n"
    "s1,30,0\n"
    "s2,41,1\n"
    "s3,55,0\n"
    "s4,62,1\n";

TEST_F(DataFiles, ShapesOfSmallInputs) {
  const LoadedInputs in = load_inputs(write("beta.csv", kBeta3x4), write("cov.csv", kCov4));
  EXPECT_EQ(in.meth.values.rows(), 3);
  EXPECT_EQ(in.meth.values.cols(), 4);
  EXPECT_EQ(in.covs.design.rows(), 4);
  EXPECT_EQ(in.covs.design.cols(), 3);
  EXPECT_EQ(in.covs.names, (std::vector<std::string>{"(Intercept)", "age", "smoker"}));
  EXPECT_TRUE((in.covs.design.col(0).array() == 1.0).all());
  EXPECT_EQ(in.meth.values(1, 2), 0.7);
  EXPECT_EQ(in.covs.design(3, 1), 62.0);
  EXPECT_TRUE(in.warnings.empty());
  EXPECT_NO_THROW(in.meth.validate());
}

TEST_F(DataFiles, PairedRawIntensitiesUseOffset) {
  write("raw_M.csv", "site_id,s1,s2,s3,s4\ncg01,1000,2000,50,0\ncg02,3000,10,400,700\n");
  write("raw_U.csv", "site_id,s1,s2,s3,s4\ncg01,500,100,950,20\ncg02,1,990,600,300\n");
  LoadOptions opt;
  opt.raw = RawLayout::paired;
  opt.offset_a = 100.0;
  const LoadedInputs in = load_inputs((dir_ / "raw").string(), write("cov.csv", kCov4), opt);
  const double m[2][4] = {{1000, 2000, 50, 0}, {3000, 10, 400, 700}};
  const double u[2][4] = {{500, 100, 950, 20}, {1, 990, 600, 300}};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(in.meth.values(r, c), m[r][c] / (m[r][c] + u[r][c] + 100.0));
  EXPECT_EQ(in.meth.mode, MethylationMode::raw_intensity);
  // The M file path itself is accepted too.
  const LoadedInputs again = load_inputs((dir_ / "raw_M.csv").string(), (dir_ / "cov.csv").string(), opt);
  EXPECT_EQ(again.meth.values, in.meth.values);
}

TEST_F(DataFiles, LongFormatIntensities) {
  const std::string path = write("long.csv",
                                 "site_id,sample_id,M,U\n"
                                 "cg01,s1,900,100\n"
                                 "cg01,s2,300,600\n"
                                 "cg02,s1,10,990\n");
  const MethylationMatrix m = read_long_intensities(path, 100.0);
  ASSERT_EQ(m.values.rows(), 2);
  ASSERT_EQ(m.values.cols(), 2);
  EXPECT_DOUBLE_EQ(m.values(0, 0), 900.0 / 1100.0);
  EXPECT_DOUBLE_EQ(m.values(0, 1), 300.0 / 1000.0);
  EXPECT_DOUBLE_EQ(m.values(1, 0), 10.0 / 1100.0);
  EXPECT_TRUE(std::isnan(m.values(1, 1)));
}

TEST_F(DataFiles, UnmatchedSampleIsDroppedWithWarning) {
  const std::string cov = write("cov.csv",
                                "sample_id,age\n"
                                "s1,30\n"
                                "s2,41\n"
                                "s3,55\n"
                                "s9,70\n");
  const LoadedInputs in = load_inputs(write("beta.csv", kBeta3x4), cov);
  EXPECT_EQ(in.meth.values.cols(), 3);
  EXPECT_EQ(in.covs.design.rows(), 3);
  EXPECT_EQ(in.meth.sample_ids, (std::vector<std::string>{"s1", "s2", "s3"}));
  EXPECT_EQ(in.meth.sample_ids, in.covs.sample_ids);
  EXPECT_EQ(in.warnings.size(), 2u);
}

TEST_F(DataFiles, MissingCovariateRowsAreDropped) {
  const std::string cov = write("cov.csv",
                                "sample_id,age\n"
                                "s1,30\n"
                                "s2,NA\n"
                                "s3,55\n"
                                "s4,\n");
  const auto [table, dropped] = read_covariates_csv(cov);
  EXPECT_EQ(dropped, 2u);
  EXPECT_EQ(table.sample_ids, (std::vector<std::string>{"s1", "s3"}));
  const LoadedInputs in = load_inputs(write("beta.csv", kBeta3x4), cov);
  EXPECT_EQ(in.meth.values.cols(), 2);
  EXPECT_FALSE(in.warnings.empty());
}

TEST_F(DataFiles, MissingBetaCellsBecomeNaN) {
  const MethylationMatrix m = read_beta_csv(write("beta.csv", "site_id,a,b,c\ncg1,0.1,NA,\ncg2,NaN,0.2,0.3\n"));
  EXPECT_TRUE(std::isnan(m.values(0, 1)));
  EXPECT_TRUE(std::isnan(m.values(0, 2)));
  EXPECT_TRUE(std::isnan(m.values(1, 0)));
  EXPECT_EQ(m.values(1, 2), 0.3);
}

TEST_F(DataFiles, TabsCommentsAndBlankLines) {
  const MethylationMatrix m =
      read_beta_csv(write("beta.tsv", "# exported\nsite_id\ts1\ts2\n\ncg1\t0.25\t0.75\r\n# trailing\n"));
  EXPECT_EQ(m.sample_ids, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(m.values(0, 1), 0.75);
}

TEST_F(DataFiles, ParseErrorsCarryLineNumbers) {
  try {
    read_beta_csv(write("ragged.csv", "site_id,s1,s2\ncg1,0.1,0.2\ncg2,0.3\n"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    read_beta_csv(write("text.csv", "site_id,s1\n\ncg1,abc\n"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(read_beta_csv(write("range.csv", "site_id,s1\ncg1,1.5\n")), ParseError);
  EXPECT_THROW(read_beta_csv(write("empty.csv", "")), ParseError);
  EXPECT_THROW(read_beta_csv((dir_ / "absent.csv").string()), ParseError);
  EXPECT_THROW(read_covariates_csv(write("dup.csv", "sample_id,x\ns1,1\ns1,2\n")), ParseError);
  EXPECT_THROW(read_long_intensities(write("neg.csv", "site_id,sample_id,M,U\ncg1,s1,-1,3\n"), 0.0), ParseError);
}

TEST_F(DataFiles, DisjointSamplesAreAnError) {
  EXPECT_THROW(load_inputs(write("beta.csv", kBeta3x4), write("cov.csv", "sample_id,x\nz1,1\nz2,2\n")), ParseError);
}

TEST_F(DataFiles, MismatchedPairedFilesAreAnError) {
  write("p_M.csv", "site_id,s1,s2\ncg1,1,2\n");
  write("p_U.csv", "site_id,s1,s3\ncg1,1,2\n");
  EXPECT_THROW(read_paired_intensities((dir_ / "p").string(), 100.0), ParseError);
}

TEST_F(DataFiles, WrittenFilesReadBackExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MethylationMatrix m;
  m.site_ids = {"cg1", "cg2", "cg3"};
  m.sample_ids = {"a", "b", "c", "d", "e"};
  m.values.resize(3, 5);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = unif(rng);
  m.values(1, 3) = std::numeric_limits<double>::quiet_NaN();
  const std::string path = (dir_ / "beta.csv").string();
  write_beta_csv(m, path);
  const MethylationMatrix back = read_beta_csv(path);
  EXPECT_EQ(back.site_ids, m.site_ids);
  EXPECT_EQ(back.sample_ids, m.sample_ids);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) {
    const double a = m.values.data()[i], b = back.values.data()[i];
    EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
  }

  CovariateTable cov;
  cov.sample_ids = m.sample_ids;
  cov.names = {"(Intercept)", "x1"};
  cov.design.resize(5, 2);
  cov.design.col(0).setOnes();
  for (Eigen::Index i = 0; i < 5; ++i) cov.design(i, 1) = unif(rng) * 1e3 - 500.0;
  write_covariates_csv(cov, (dir_ / "cov.csv").string());
  const auto [cov_back, dropped] = read_covariates_csv((dir_ / "cov.csv").string());
  EXPECT_EQ(dropped, 0u);
  EXPECT_EQ(cov_back.design, cov.design);
  EXPECT_EQ(cov_back.names, cov.names);
}

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(-30.0, 30.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::exp(unif(rng)) * (i % 2 ? -1.0 : 1.0);
    EXPECT_EQ(parse_cell(format_double(v), "mem", 0), v);
  }
  EXPECT_EQ(format_double(std::nan("")), "NA");
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(parse_cell(format_double(-std::numeric_limits<double>::infinity()), "mem", 0),
            -std::numeric_limits<double>::infinity());
}

TEST(Intensities, OffsetBetaDefinition) {
  Eigen::MatrixXd m(1, 3), u(1, 3);
  m << 0, 50, 1e4;
  u << 0, 50, 1;
  const MethylationMatrix mm = from_intensities({"cg"}, {"a", "b", "c"}, m, u, 100.0);
  EXPECT_EQ(mm.values(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(mm.values(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(mm.values(0, 2), 1e4 / (1e4 + 101.0));
  // Without an offset an all-zero cell has no defined ratio.
  const MethylationMatrix bare = from_intensities({"cg"}, {"a", "b", "c"}, m, u, 0.0);
  EXPECT_TRUE(std::isnan(bare.values(0, 0)));
}

}  // namespace
}  // namespace rcg
