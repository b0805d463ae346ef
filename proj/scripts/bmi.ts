bmi <- function(weight, height) weight/(height^2)
