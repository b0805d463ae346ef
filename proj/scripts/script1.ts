x <- 10
start_counting()
y <- 2*x
