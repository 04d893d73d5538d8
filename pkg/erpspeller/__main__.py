from erpspeller import main

main()
