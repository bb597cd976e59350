// populated later
