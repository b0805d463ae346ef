to_cm <- function(d) {
  d$height <- d$height * 2.54
  d
}
out <- women |>
  start_log(simple$new()) |>
  to_cm |>
  identity |>
  dump_log()
