out <- 3 |>
  start_counting |>
    sin |>
    cos |>
  end_counting
out
