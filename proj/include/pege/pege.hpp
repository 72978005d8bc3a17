#ifndef PEGE_PEGE_HPP
#define PEGE_PEGE_HPP

#include <pege/checkpoint.hpp>
#include <pege/config.hpp>
#include <pege/curriculum.hpp>
#include <pege/data.hpp>
#include <pege/error.hpp>
#include <pege/estimators.hpp>
#include <pege/finite_diff.hpp>
#include <pege/gradcheck.hpp>
#include <pege/layers.hpp>
#include <pege/metrics.hpp>
#include <pege/models.hpp>
#include <pege/ops.hpp>
#include <pege/optim.hpp>
#include <pege/parallel.hpp>
#include <pege/quantizer.hpp>
#include <pege/tensor.hpp>
#include <pege/trainer.hpp>

#endif // PEGE_PEGE_HPP
