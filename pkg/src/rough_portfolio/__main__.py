from rough_portfolio.app import main

main()
