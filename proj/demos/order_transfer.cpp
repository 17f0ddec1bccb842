// Order-aware transfer in a dozen library calls: measure the word-order
// distance between two treebanks, train a position-blind order teacher on
// the target, distill it into a student trained on the source, and compare
// against a student whose order head learns the source's own conventions.
#include <iomanip>
#include <iostream>

#include "xling/distill.hpp"
#include "xling/teacher.hpp"
#include "xling/typology.hpp"

using namespace xling;

int main(int argc, char** argv) {
    const std::string src_path = argc > 1 ? argv[1] : "data/source.conllu";
    const std::string tgt_path = argc > 2 ? argv[2] : "data/target.conllu";
    const Treebank S = parse_conllu_file(src_path);
    const Treebank T = parse_conllu_file(tgt_path);

    const std::vector<TripleKey> keys = select_triples({S, T}, 52);
    std::cout << std::fixed << std::setprecision(4) << "word-order distance "
              << word_order_distance(order_feature(S, keys), order_feature(T, keys)) << "\n";

    TrainOptions topt;
    topt.epochs = 60;
    topt.batch_size = 16;
    topt.lr = 0.02;
    TeacherTrainOutcome teacher = train_teacher(T, TeacherDims{8, 1, 2, 4, 16, 8}, topt, 1);
    std::cout << "teacher holdout direction accuracy " << teacher.holdout_accuracy << "\n";

    const StudentDims dims{ParserDims{16, 8, 2, 16, 12}, 8};
    TrainOptions sopt;
    sopt.epochs = 60;
    sopt.batch_size = 8;
    sopt.lr = 2e-3;
    auto [kd, kd_curve] = train_student(S, dims, sopt, 1.0, DistillMode::kd, &teacher.model, 1);
    auto [wol, wol_curve] = train_student(S, dims, sopt, 1.0, DistillMode::wol, nullptr, 1);

    auto line = [&](const char* name, StudentModel& m, const std::vector<double>& curve) {
        std::cout << name << " student: train loss " << std::scientific << std::setprecision(1)
                  << curve.back() << std::fixed << std::setprecision(4) << ", UAS on target "
                  << evaluate(m.parser(), T).uas << "\n";
    };
    line("kd ", kd, kd_curve);
    line("wol", wol, wol_curve);
    return 0;
}
