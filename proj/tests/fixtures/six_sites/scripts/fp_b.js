var x = navigator["webdriver"];
