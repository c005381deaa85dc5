document.title = 'd';
